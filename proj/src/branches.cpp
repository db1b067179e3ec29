#include "etnet/branches.hpp"

#include <algorithm>
#include <cmath>

namespace etnet {

namespace {

constexpr double kNormEps = 1e-12;

std::vector<Tensor> series_inputs(Tape& tape, const Vector& x) {
    require(x.size() > 0, "shape", "forward pass over an empty series");
    std::vector<Tensor> xs;
    xs.reserve(static_cast<std::size_t>(x.size()));
    for (Eigen::Index t = 0; t < x.size(); ++t) xs.push_back(tape.constant(x(t)));
    return xs;
}

// Decoder run: the latent is the input at every step, the state starts at
// zero, and the readout is applied to the states in reverse order so that
// entry j of the reconstruction lines up with x(j).
Tensor decode_series(Tape& tape, SrnnCell& cell, AffineParams& readout, Tensor z_c,
                     Eigen::Index len, bool standard_lstm_output) {
    std::vector<Tensor> zs(static_cast<std::size_t>(len), z_c);
    SrnnRun run = srnn_forward(tape, cell, zs, standard_lstm_output);
    std::vector<Tensor> rev(run.h.rbegin(), run.h.rend());
    return decode_readout(readout, rev);
}

Tensor decode_series(Tape& tape, CellParams& cell, AffineParams& readout, Tensor z_c,
                     Eigen::Index len, bool standard_lstm_output) {
    Tensor zero = tape.constant(Matrix::Zero(cell.hidden, 1));
    CellState state{zero, zero};
    std::vector<Tensor> hs;
    hs.reserve(static_cast<std::size_t>(len));
    for (Eigen::Index t = 0; t < len; ++t) {
        state = cell_step(tape, cell, state, z_c, standard_lstm_output);
        hs.push_back(state.h);
    }
    std::vector<Tensor> rev(hs.rbegin(), hs.rend());
    return decode_readout(readout, rev);
}

} // namespace

double rel_distance(const Vector& x, const Vector& xp) {
    require(x.size() == xp.size(), "shape",
            "rel_distance: lengths " + std::to_string(x.size()) + " and " +
                std::to_string(xp.size()) + " differ");
    return (x - xp).norm() / std::max(x.norm(), kNormEps);
}

double cos_similarity(const Vector& x, const Vector& xp) {
    require(x.size() == xp.size(), "shape",
            "cos_similarity: lengths " + std::to_string(x.size()) + " and " +
                std::to_string(xp.size()) + " differ");
    double nx = x.norm();
    double np = xp.norm();
    if (nx < kNormEps || np < kNormEps) return 0.0;
    return std::clamp(x.dot(xp) / (nx * np + kNormEps), -1.0, 1.0);
}

WBranch WBranch::init(int n_e, Eigen::Index hidden, Eigen::Index latent, CellKind kind,
                      std::uint64_t mask_seed, Rng& rng) {
    require(n_e >= 1, "config", "W branch needs at least one encoder/decoder pair");
    require(hidden >= 1 && latent >= 1, "config", "W branch widths must be positive");
    WBranch b;
    b.hidden = hidden;
    b.latent = latent;
    for (int i = 0; i < n_e; ++i) {
        int skip = (i % 3) + 1;
        b.encoders.push_back(SrnnCell::init(kind, hidden, 1, skip,
                                            derive_seed(mask_seed, static_cast<std::uint64_t>(i)),
                                            "w.enc" + std::to_string(i), rng));
    }
    b.combiner = AffineParams::init("w.combiner", latent, static_cast<Eigen::Index>(n_e) * hidden,
                                    rng);
    for (int i = 0; i < n_e; ++i) {
        int skip = (i % 3) + 1;
        b.decoders.push_back(
            SrnnCell::init(kind, hidden, latent, skip,
                           derive_seed(mask_seed, 100 + static_cast<std::uint64_t>(i)),
                           "w.dec" + std::to_string(i), rng));
        b.readouts.push_back(AffineParams::init("w.ro" + std::to_string(i), 1, hidden, rng));
    }
    return b;
}

void WBranch::collect(ParamSet& ps) {
    for (SrnnCell& e : encoders) e.collect(ps);
    combiner.collect(ps);
    for (std::size_t i = 0; i < decoders.size(); ++i) {
        decoders[i].collect(ps);
        readouts[i].collect(ps);
    }
}

WForward w_forward(Tape& tape, WBranch& branch, const Vector& x, bool standard_lstm_output) {
    std::vector<Tensor> xs = series_inputs(tape, x);

    std::vector<Tensor> finals;
    finals.reserve(branch.encoders.size());
    for (SrnnCell& enc : branch.encoders)
        finals.push_back(srnn_forward(tape, enc, xs, standard_lstm_output).final_h);

    WForward out;
    out.z_c = affine(branch.combiner, finals);

    std::vector<Tensor> rel_nodes, cos_nodes;
    for (std::size_t i = 0; i < branch.decoders.size(); ++i) {
        Tensor recon = decode_series(tape, branch.decoders[i], branch.readouts[i], out.z_c,
                                     x.size(), standard_lstm_output);
        out.recons.push_back(recon);
        rel_nodes.push_back(rel_dist_to(recon, x));
        cos_nodes.push_back(cos_to(recon, x));
        out.rel_all.push_back(rel_nodes.back().value()(0, 0));
        out.cos_all.push_back(cos_nodes.back().value()(0, 0));
    }

    // p = argmin d_rel, q = argmin (1 - d_cos); ties break to the lowest index
    out.argmin_rel = static_cast<int>(
        std::min_element(out.rel_all.begin(), out.rel_all.end()) - out.rel_all.begin());
    out.argmax_cos = static_cast<int>(
        std::max_element(out.cos_all.begin(), out.cos_all.end()) - out.cos_all.begin());

    out.z = vstack({out.z_c, rel_nodes[static_cast<std::size_t>(out.argmin_rel)],
                    cos_nodes[static_cast<std::size_t>(out.argmax_cos)]});
    return out;
}

DBranch DBranch::init(int n_l, Eigen::Index hidden, Eigen::Index latent, CellKind kind,
                      CellKind decoder_kind, Rng& rng) {
    require(n_l >= 1, "config", "D branch needs at least one encoder layer");
    require(hidden >= 1 && latent >= 1, "config", "D branch widths must be positive");
    DBranch b;
    b.hidden = hidden;
    b.latent = latent;
    for (int i = 0; i < n_l; ++i) {
        Eigen::Index in = (i == 0) ? 1 : hidden;
        b.layers.push_back(CellParams::init(kind, hidden, in, "d.enc" + std::to_string(i), rng));
    }
    b.schedule = DilationSchedule::exponential(static_cast<std::size_t>(n_l));
    b.combiner = AffineParams::init("d.combiner", latent, static_cast<Eigen::Index>(n_l) * hidden,
                                    rng);
    b.decoder = CellParams::init(decoder_kind, hidden, latent, "d.dec", rng);
    b.readout = AffineParams::init("d.ro", 1, hidden, rng);
    return b;
}

void DBranch::collect(ParamSet& ps) {
    for (CellParams& l : layers) l.collect(ps);
    combiner.collect(ps);
    decoder.collect(ps);
    readout.collect(ps);
}

DForward d_forward(Tape& tape, DBranch& branch, const Vector& x, bool standard_lstm_output) {
    std::vector<Tensor> xs = series_inputs(tape, x);
    DilatedRun run = dilated_forward(tape, branch.layers, branch.schedule, xs,
                                     standard_lstm_output);

    DForward out;
    out.z_c = affine(branch.combiner, run.finals);
    out.recon = decode_series(tape, branch.decoder, branch.readout, out.z_c, x.size(),
                              standard_lstm_output);
    Tensor rel = rel_dist_to(out.recon, x);
    Tensor cs = cos_to(out.recon, x);
    out.d_rel = rel.value()(0, 0);
    out.d_cos = cs.value()(0, 0);
    out.z = vstack({out.z_c, rel, cs});
    return out;
}

} // namespace etnet
