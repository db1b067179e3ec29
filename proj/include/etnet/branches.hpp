#pragma once

#include <vector>

#include "etnet/cells.hpp"

namespace etnet {

// Plain (non-recorded) reconstruction features. The graph ops rel_dist_to /
// cos_to compute the same quantities; equality is pinned by tests.
double rel_distance(const Vector& x, const Vector& xp);
double cos_similarity(const Vector& x, const Vector& xp);

// W compression network: N_E parallel skip-recurrent encoder/decoder pairs
// around one shared compressed latent.
struct WBranch {
    std::vector<SrnnCell> encoders;       // input width 1
    std::vector<SrnnCell> decoders;       // input width L_c
    std::vector<AffineParams> readouts;   // one per decoder, N_N -> 1
    AffineParams combiner;                // L_c x (N_E * N_N)
    Eigen::Index hidden = 0;              // N_N
    Eigen::Index latent = 0;              // L_c

    // Skip lengths cycle 1,2,3 with the encoder/decoder index; mask seeds are
    // derived per unit from `mask_seed` so serialization stays compact.
    static WBranch init(int n_e, Eigen::Index hidden, Eigen::Index latent, CellKind kind,
                        std::uint64_t mask_seed, Rng& rng);
    void collect(ParamSet& ps);
};

struct WForward {
    std::vector<Tensor> recons;  // per decoder, aligned with x
    Tensor z_c;                  // L_c x 1
    Tensor z;                    // (L_c + 2) x 1: [z_c ; d_rel ; d_cos]
    std::vector<double> rel_all; // per-decoder d_rel(x, x'_i)
    std::vector<double> cos_all; // per-decoder d_cos(x, x'_i)
    int argmin_rel = 0;
    int argmax_cos = 0;
};

WForward w_forward(Tape& tape, WBranch& branch, const Vector& x,
                   bool standard_lstm_output = false);

// D compression network: a stacked dilated encoder and a single plain
// recurrent decoder around the combined latent.
struct DBranch {
    std::vector<CellParams> layers;  // dilated encoder stack
    DilationSchedule schedule;       // 3^i
    CellParams decoder;              // single layer, input width L_c
    AffineParams readout;            // N_N -> 1
    AffineParams combiner;           // L_c x (N_L * N_N)
    Eigen::Index hidden = 0;
    Eigen::Index latent = 0;

    static DBranch init(int n_l, Eigen::Index hidden, Eigen::Index latent, CellKind kind,
                        CellKind decoder_kind, Rng& rng);
    void collect(ParamSet& ps);
};

struct DForward {
    Tensor recon;
    Tensor z_c;
    Tensor z;  // [z_c ; d_rel ; d_cos]
    double d_rel = 0.0;
    double d_cos = 0.0;
};

DForward d_forward(Tape& tape, DBranch& branch, const Vector& x,
                   bool standard_lstm_output = false);

} // namespace etnet
