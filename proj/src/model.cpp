#include "etnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>

namespace etnet {

void validate(const ModelConfig& cfg) {
    require(cfg.n_e >= 1, "config", "N_E must be >= 1");
    require(cfg.n_l >= 1, "config", "N_L must be >= 1");
    require(cfg.n_n >= 1, "config", "N_N must be >= 1");
    require(cfg.k >= 1, "config", "K must be >= 1");
    require(cfg.l_c >= 1, "config", "L_c must be >= 1");
    require(cfg.lambda >= 0.0, "config", "lambda must be >= 0");
    require(cfg.learning_rate > 0.0, "config", "learning_rate must be positive");
    require(cfg.epochs >= 1, "config", "epochs must be >= 1");
    require(cfg.eps_reg > 0.0, "config", "eps_reg must be positive");
    require(cfg.em_iterations >= 1, "config", "em_iterations must be >= 1");
    require(cfg.early_stop_patience >= 1, "config", "early_stop_patience must be >= 1");
    require(cfg.early_stop_min_delta >= 0.0, "config", "early_stop_min_delta must be >= 0");
    require(cfg.max_grad_norm >= 0.0, "config", "max_grad_norm must be >= 0");
}

ModelConfig config_from_json(const nlohmann::json& j) {
    require(j.is_object(), "config", "model config must be a JSON object");
    ModelConfig cfg;
    for (const auto& [key, val] : j.items()) {
        if (key == "N_E")
            cfg.n_e = val.get<int>();
        else if (key == "N_L")
            cfg.n_l = val.get<int>();
        else if (key == "N_N")
            cfg.n_n = val.get<Eigen::Index>();
        else if (key == "K")
            cfg.k = val.get<Eigen::Index>();
        else if (key == "L_c")
            cfg.l_c = val.get<Eigen::Index>();
        else if (key == "lambda")
            cfg.lambda = val.get<double>();
        else if (key == "learning_rate")
            cfg.learning_rate = val.get<double>();
        else if (key == "epochs")
            cfg.epochs = val.get<int>();
        else if (key == "seed")
            cfg.seed = val.get<std::uint64_t>();
        else if (key == "w_cell")
            cfg.w_cell = cell_kind_from_string(val.get<std::string>());
        else if (key == "d_cell")
            cfg.d_cell = cell_kind_from_string(val.get<std::string>());
        else if (key == "eps_reg")
            cfg.eps_reg = val.get<double>();
        else if (key == "em_iterations")
            cfg.em_iterations = val.get<int>();
        else if (key == "standard_lstm_output")
            cfg.standard_lstm_output = val.get<bool>();
        else if (key == "normalize_ensemble_energy")
            cfg.normalize_ensemble_energy = val.get<bool>();
        else if (key == "early_stop_patience")
            cfg.early_stop_patience = val.get<int>();
        else if (key == "early_stop_min_delta")
            cfg.early_stop_min_delta = val.get<double>();
        else if (key == "max_grad_norm")
            cfg.max_grad_norm = val.get<double>();
        else
            fail("config", "unknown config key '" + key + "'");
    }
    validate(cfg);
    return cfg;
}

nlohmann::json config_to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["N_E"] = cfg.n_e;
    j["N_L"] = cfg.n_l;
    j["N_N"] = cfg.n_n;
    j["K"] = cfg.k;
    j["L_c"] = cfg.l_c;
    j["lambda"] = cfg.lambda;
    j["learning_rate"] = cfg.learning_rate;
    j["epochs"] = cfg.epochs;
    j["seed"] = cfg.seed;
    j["w_cell"] = to_string(cfg.w_cell);
    j["d_cell"] = to_string(cfg.d_cell);
    j["eps_reg"] = cfg.eps_reg;
    j["em_iterations"] = cfg.em_iterations;
    j["standard_lstm_output"] = cfg.standard_lstm_output;
    j["normalize_ensemble_energy"] = cfg.normalize_ensemble_energy;
    j["early_stop_patience"] = cfg.early_stop_patience;
    j["early_stop_min_delta"] = cfg.early_stop_min_delta;
    j["max_grad_norm"] = cfg.max_grad_norm;
    return j;
}

void EtNetModel::collect_w(ParamSet& ps) {
    w.collect(ps);
    gm_w.collect(ps);
}

void EtNetModel::collect_d(ParamSet& ps) {
    d.collect(ps);
    gm_d.collect(ps);
}

Tensor branch_loss(const std::vector<Tensor>& recon_sses, const std::vector<Tensor>& energies,
                   double lambda) {
    require(!recon_sses.empty(), "shape", "branch_loss: no reconstruction terms");
    require(!energies.empty(), "shape", "branch_loss: no energy terms");
    require(lambda >= 0.0, "config", "branch_loss: lambda must be >= 0");
    return add(mean_of(recon_sses), scale(mean_of(energies), lambda));
}

namespace {

// Recording a forward pass reads the bound parameters but never writes them;
// only backward does, and inference never runs backward.
template <class T>
T& mut(const T& v) {
    return const_cast<T&>(v);
}

EtNetModel skeleton(const ModelConfig& cfg) {
    EtNetModel m;
    m.config = cfg;
    Rng rng_w(derive_seed(cfg.seed, 10));
    m.w = WBranch::init(cfg.n_e, cfg.n_n, cfg.l_c, cfg.w_cell, derive_seed(cfg.seed, 11), rng_w);
    m.gm_w = MembershipNet::init(cfg.l_c + 2, cfg.k, "gm_w", rng_w);
    Rng rng_d(derive_seed(cfg.seed, 12));
    m.d = DBranch::init(cfg.n_l, cfg.n_n, cfg.l_c, cfg.d_cell, cfg.d_cell, rng_d);
    m.gm_d = MembershipNet::init(cfg.l_c + 2, cfg.k, "gm_d", rng_d);
    m.gmm_w = make_gmm_state(cfg.k, cfg.l_c + 2, cfg.eps_reg);
    m.gmm_d = make_gmm_state(cfg.k, cfg.l_c + 2, cfg.eps_reg);
    return m;
}

struct SampleGraph {
    std::vector<Tensor> recons;
    Tensor z;
};

using ForwardFn = std::function<SampleGraph(Tape&, const Vector&)>;

void train_branch(const ModelConfig& cfg, const std::vector<Vector>& xs, ParamSet& ps,
                  MembershipNet& gm, GmmState& gmm, const ForwardFn& forward, int recon_count,
                  std::uint64_t seed_stream, const char* branch_name,
                  std::vector<double>* loss_log, std::vector<double>* recon_log) {
    const std::size_t N = xs.size();
    AdamState adam(ps, AdamConfig{cfg.learning_rate});
    Rng seed_rng(derive_seed(cfg.seed, seed_stream));

    double best = std::numeric_limits<double>::infinity();
    int stalled = 0;
    // the returned state is the best epoch's, not wherever the last step
    // wandered; full-batch Adam on unrolled recurrences can leave a plateau
    std::vector<Matrix> best_params(ps.items().size());
    GmmState best_gmm = gmm;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Tape tape;
        std::vector<Tensor> zs, gammas, sses;
        zs.reserve(N);
        gammas.reserve(N);
        sses.reserve(N * static_cast<std::size_t>(recon_count));
        for (const Vector& x : xs) {
            SampleGraph g = forward(tape, x);
            for (Tensor r : g.recons) sses.push_back(sse_to(r, x));
            zs.push_back(g.z);
            gammas.push_back(membership(tape, gm, g.z));
        }

        Matrix Z(static_cast<Eigen::Index>(N), gmm.dim), G(static_cast<Eigen::Index>(N), gmm.K);
        for (std::size_t i = 0; i < N; ++i) {
            Z.row(static_cast<Eigen::Index>(i)) = zs[i].value().col(0).transpose();
            G.row(static_cast<Eigen::Index>(i)) = gammas[i].value().col(0).transpose();
        }
        if (epoch == 0) {
            gmm.phi = update_phi(G);
            seed_means(gmm, Z, seed_rng);
        }

        Tensor phi = mean_of(gammas);
        auto consts = graph_consts(gmm);
        std::vector<Tensor> energies;
        energies.reserve(N);
        for (Tensor z : zs) energies.push_back(gmm_energy(z, phi, consts));

        double recon_value = 0.0;
        for (Tensor s : sses) recon_value += s.value()(0, 0);
        recon_value /= static_cast<double>(sses.size());

        Tensor loss = branch_loss(sses, energies, cfg.lambda);
        double loss_value = loss.value()(0, 0);
        require(std::isfinite(loss_value), "numeric",
                std::string(branch_name) + " loss diverged at epoch " + std::to_string(epoch));

        bool improved = loss_value < best - cfg.early_stop_min_delta;
        if (improved) {
            best = loss_value;
            stalled = 0;
            for (std::size_t p = 0; p < ps.items().size(); ++p)
                best_params[p] = ps.items()[p]->value;
            best_gmm = gmm; // the mixture these energies were measured under
        }

        tape.backward(loss, /*release_memory=*/true);
        if (cfg.max_grad_norm > 0.0) {
            double sq = 0.0;
            for (Param* p : ps.items()) sq += p->grad.squaredNorm();
            if (sq > cfg.max_grad_norm * cfg.max_grad_norm) {
                const double scale = cfg.max_grad_norm / std::sqrt(sq);
                for (Param* p : ps.items()) p->grad *= scale;
            }
        }
        adam_step(ps, adam);

        gmm.phi = update_phi(G);
        em_update(gmm, Z, cfg.em_iterations);

        if (loss_log) loss_log->push_back(loss_value);
        if (recon_log) recon_log->push_back(recon_value);
        if (!improved && ++stalled >= cfg.early_stop_patience) break;
    }
    for (std::size_t p = 0; p < ps.items().size(); ++p) ps.items()[p]->value = best_params[p];
    gmm = best_gmm;
}

Vector scaled_input(const EtNetModel& m, const TimeSeries& x) {
    validate(x);
    require(x.length() == m.series_length, "shape",
            "series '" + x.id + "' has length " + std::to_string(x.length()) +
                ", the model expects " + std::to_string(m.series_length));
    std::vector<double> t = m.scaler.transform(x.values);
    return Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()));
}

Vector embed_w(const EtNetModel& m, const Vector& xv, Vector* gamma) {
    Tape tape;
    WForward f = w_forward(tape, mut(m.w), xv, m.config.standard_lstm_output);
    if (gamma) *gamma = membership(tape, mut(m.gm_w), f.z).value().col(0);
    return f.z.value().col(0);
}

Vector embed_d(const EtNetModel& m, const Vector& xv, Vector* gamma) {
    Tape tape;
    DForward f = d_forward(tape, mut(m.d), xv, m.config.standard_lstm_output);
    if (gamma) *gamma = membership(tape, mut(m.gm_d), f.z).value().col(0);
    return f.z.value().col(0);
}

} // namespace

EtNetModel train(const ModelConfig& cfg, const Corpus& data, TrainReport* report) {
    validate(cfg);
    require(!data.empty(), "shape", "train: empty training set");
    const std::size_t L = data[0].length();
    for (const TimeSeries& x : data) {
        validate(x);
        require(x.length() == L, "shape",
                "train: series '" + x.id + "' has length " + std::to_string(x.length()) +
                    ", expected " + std::to_string(L));
    }

    EtNetModel m = skeleton(cfg);
    m.series_length = L;
    m.scaler = MinMaxScaler::fit(data);

    std::vector<Vector> xs;
    xs.reserve(data.size());
    for (const TimeSeries& x : data) {
        std::vector<double> t = m.scaler.transform(x.values);
        xs.push_back(Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size())));
    }

    ParamSet ps_w;
    m.collect_w(ps_w);
    ForwardFn fw = [&](Tape& tape, const Vector& x) {
        WForward f = w_forward(tape, m.w, x, cfg.standard_lstm_output);
        return SampleGraph{f.recons, f.z};
    };
    train_branch(cfg, xs, ps_w, m.gm_w, m.gmm_w, fw, cfg.n_e, 20, "W branch",
                 report ? &report->loss_w : nullptr, report ? &report->recon_w : nullptr);

    ParamSet ps_d;
    m.collect_d(ps_d);
    ForwardFn fd = [&](Tape& tape, const Vector& x) {
        DForward f = d_forward(tape, m.d, x, cfg.standard_lstm_output);
        return SampleGraph{{f.recon}, f.z};
    };
    train_branch(cfg, xs, ps_d, m.gm_d, m.gmm_d, fd, 1, 21, "D branch",
                 report ? &report->loss_d : nullptr, report ? &report->recon_d : nullptr);

    // The per-epoch EM chased a moving embedding, so refit both mixtures on
    // the frozen final embeddings before any statistic is read off them. The
    // membership nets' aggregate seeds phi, everything else is re-read.
    const std::size_t N = xs.size();
    Matrix zw(static_cast<Eigen::Index>(N), m.gmm_w.dim);
    Matrix zd(static_cast<Eigen::Index>(N), m.gmm_d.dim);
    Matrix gw(static_cast<Eigen::Index>(N), m.gmm_w.K);
    Matrix gd(static_cast<Eigen::Index>(N), m.gmm_d.K);
    for (std::size_t i = 0; i < N; ++i) {
        Vector gamma;
        zw.row(static_cast<Eigen::Index>(i)) = embed_w(m, xs[i], &gamma).transpose();
        gw.row(static_cast<Eigen::Index>(i)) = gamma.transpose();
        zd.row(static_cast<Eigen::Index>(i)) = embed_d(m, xs[i], &gamma).transpose();
        gd.row(static_cast<Eigen::Index>(i)) = gamma.transpose();
    }
    m.gmm_w.phi = update_phi(gw);
    m.gmm_d.phi = update_phi(gd);
    Rng refit_w(derive_seed(cfg.seed, 22));
    Rng refit_d(derive_seed(cfg.seed, 23));
    refit_mixture(m.gmm_w, zw, refit_w);
    refit_mixture(m.gmm_d, zd, refit_d);

    // training-set energies under the final weights: calibration statistics
    // and the sorted score ladder for percentile thresholds
    std::vector<double> ew(N), ed(N);
    for (std::size_t i = 0; i < N; ++i) {
        ew[i] = energy(m.gmm_w, zw.row(static_cast<Eigen::Index>(i)).transpose());
        ed[i] = energy(m.gmm_d, zd.row(static_cast<Eigen::Index>(i)).transpose());
    }
    auto stats = [](const std::vector<double>& e) {
        double mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
        double var = 0.0;
        for (double v : e) var += (v - mean) * (v - mean);
        return std::pair<double, double>(mean, std::sqrt(var / static_cast<double>(e.size())));
    };
    std::tie(m.energy_mean_w, m.energy_std_w) = stats(ew);
    std::tie(m.energy_mean_d, m.energy_std_d) = stats(ed);

    m.training_scores.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        double sw = ew[i], sd = ed[i];
        if (cfg.normalize_ensemble_energy) {
            sw = (sw - m.energy_mean_w) / std::max(m.energy_std_w, 1e-12);
            sd = (sd - m.energy_mean_d) / std::max(m.energy_std_d, 1e-12);
        }
        m.training_scores[i] = std::max(sw, sd);
    }
    std::sort(m.training_scores.begin(), m.training_scores.end());
    return m;
}

ScoredSample anomaly_score(const EtNetModel& m, const TimeSeries& x) {
    Vector xv = scaled_input(m, x);
    ScoredSample s;
    s.id = x.id;
    s.z_w = embed_w(m, xv, nullptr);
    s.z_d = embed_d(m, xv, nullptr);
    s.gamma_w = responsibilities(m.gmm_w, s.z_w);
    s.gamma_d = responsibilities(m.gmm_d, s.z_d);
    s.e_w = energy(m.gmm_w, s.z_w);
    s.e_d = energy(m.gmm_d, s.z_d);
    double sw = s.e_w, sd = s.e_d;
    if (m.config.normalize_ensemble_energy) {
        sw = (sw - m.energy_mean_w) / std::max(m.energy_std_w, 1e-12);
        sd = (sd - m.energy_mean_d) / std::max(m.energy_std_d, 1e-12);
    }
    s.score = std::max(sw, sd);
    s.label = cluster_from_memberships(s.gamma_w, s.gamma_d);
    return s;
}

int cluster_from_memberships(const Vector& gamma_w, const Vector& gamma_d) {
    require(gamma_w.size() >= 1 && gamma_d.size() >= 1, "shape",
            "cluster_from_memberships: empty membership vector");
    Eigen::Index aw = 0, ad = 0;
    double mw = gamma_w.maxCoeff(&aw); // first occurrence: lowest-index tie-break
    double md = gamma_d.maxCoeff(&ad);
    return static_cast<int>(mw >= md ? aw : ad);
}

int cluster_assign(const EtNetModel& m, const TimeSeries& x) {
    Vector xv = scaled_input(m, x);
    Vector gw = responsibilities(m.gmm_w, embed_w(m, xv, nullptr));
    Vector gd = responsibilities(m.gmm_d, embed_d(m, xv, nullptr));
    return cluster_from_memberships(gw, gd);
}

std::vector<ReferencePoint> attribute(const EtNetModel& m, const TimeSeries& anomaly,
                                      const Corpus& training, BranchSel branch, int n_points,
                                      int k_neighbors) {
    require(!training.empty(), "shape", "attribute: empty training set");
    require(n_points >= 1, "config", "attribute: n_points must be >= 1");
    require(k_neighbors >= 1 &&
                static_cast<std::size_t>(k_neighbors) <= training.size(),
            "config", "attribute: k_neighbors must be in [1, training set size]");

    auto embed = [&](const TimeSeries& x) {
        Vector xv = scaled_input(m, x);
        return branch == BranchSel::W ? embed_w(m, xv, nullptr) : embed_d(m, xv, nullptr);
    };
    Vector za = embed(anomaly);
    std::vector<Vector> zt;
    zt.reserve(training.size());
    for (const TimeSeries& x : training) zt.push_back(embed(x));

    const GmmState& g = branch == BranchSel::W ? m.gmm_w : m.gmm_d;
    Vector z_cnt = Vector::Zero(g.dim);
    for (Eigen::Index k = 0; k < g.K; ++k)
        z_cnt += g.phi(k) * g.means[static_cast<std::size_t>(k)];

    std::vector<ReferencePoint> out;
    out.reserve(static_cast<std::size_t>(n_points));
    for (int j = 1; j <= n_points; ++j) {
        double t = static_cast<double>(j) / static_cast<double>(n_points + 1);
        ReferencePoint rp;
        rp.line_point = za + t * (z_cnt - za);

        std::vector<std::size_t> order(training.size());
        std::iota(order.begin(), order.end(), 0);
        std::vector<double> dist(training.size());
        for (std::size_t i = 0; i < training.size(); ++i)
            dist[i] = (zt[i] - rp.line_point).norm();
        std::partial_sort(order.begin(), order.begin() + k_neighbors, order.end(),
                          [&](std::size_t a, std::size_t b) {
                              return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
                          });
        for (int n = 0; n < k_neighbors; ++n) {
            rp.neighbor_ids.push_back(order[static_cast<std::size_t>(n)]);
            rp.distances.push_back(dist[order[static_cast<std::size_t>(n)]]);
        }
        out.push_back(std::move(rp));
    }
    return out;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& v) {
    nlohmann::json j;
    j["rows"] = v.rows();
    j["cols"] = v.cols();
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(v.size()));
    for (Eigen::Index r = 0; r < v.rows(); ++r)
        for (Eigen::Index c = 0; c < v.cols(); ++c) data.push_back(v(r, c));
    j["data"] = data;
    return j;
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
    require(j.contains("rows") && j.contains("cols") && j.contains("data"), "io",
            what + ": malformed matrix record");
    Eigen::Index rows = j["rows"].get<Eigen::Index>();
    Eigen::Index cols = j["cols"].get<Eigen::Index>();
    const auto& data = j["data"];
    require(rows >= 0 && cols >= 0 &&
                data.size() == static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
            "io", what + ": matrix size does not match its data");
    Matrix v(rows, cols);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) v(r, c) = data[i++].get<double>();
    return v;
}

nlohmann::json gmm_to_json(const GmmState& s) {
    nlohmann::json j;
    j["K"] = s.K;
    j["dim"] = s.dim;
    j["eps_reg"] = s.eps_reg;
    j["ready"] = s.ready;
    j["phi"] = std::vector<double>(s.phi.data(), s.phi.data() + s.phi.size());
    j["means"] = nlohmann::json::array();
    j["covs"] = nlohmann::json::array();
    for (const Vector& mu : s.means)
        j["means"].push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
    for (const Matrix& c : s.covs) j["covs"].push_back(matrix_to_json(c));
    return j;
}

GmmState gmm_from_json(const nlohmann::json& j, const std::string& what) {
    GmmState s = make_gmm_state(j.at("K").get<Eigen::Index>(), j.at("dim").get<Eigen::Index>(),
                                j.at("eps_reg").get<double>());
    const auto& phi = j.at("phi");
    require(phi.size() == static_cast<std::size_t>(s.K), "io", what + ": phi width mismatch");
    for (Eigen::Index k = 0; k < s.K; ++k)
        s.phi(k) = phi[static_cast<std::size_t>(k)].get<double>();
    const auto& means = j.at("means");
    const auto& covs = j.at("covs");
    require(means.size() == static_cast<std::size_t>(s.K) &&
                covs.size() == static_cast<std::size_t>(s.K),
            "io", what + ": component count mismatch");
    for (std::size_t k = 0; k < static_cast<std::size_t>(s.K); ++k) {
        const auto& mu = means[k];
        require(mu.size() == static_cast<std::size_t>(s.dim), "io", what + ": mean width mismatch");
        for (Eigen::Index i = 0; i < s.dim; ++i)
            s.means[k](i) = mu[static_cast<std::size_t>(i)].get<double>();
        Matrix c = matrix_from_json(covs[k], what + " cov");
        require(c.rows() == s.dim && c.cols() == s.dim, "io", what + ": cov shape mismatch");
        s.covs[k] = c;
    }
    s.ready = j.at("ready").get<bool>();
    s.refresh_factors();
    return s;
}

nlohmann::json masks_to_json(const std::vector<SrnnCell>& cells) {
    nlohmann::json arr = nlohmann::json::array();
    for (const SrnnCell& c : cells) {
        nlohmann::json m;
        m["seed"] = c.mask.seed;
        m["skip"] = c.mask.skip;
        arr.push_back(m);
    }
    return arr;
}

void masks_from_json(const nlohmann::json& arr, std::vector<SrnnCell>& cells,
                     const std::string& what) {
    require(arr.is_array() && arr.size() == cells.size(), "io", what + ": mask count mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        cells[i].mask.seed = arr[i].at("seed").get<std::uint64_t>();
        int skip = arr[i].at("skip").get<int>();
        require(skip >= 1 && skip <= 3, "io", what + ": skip out of range");
        cells[i].mask.skip = skip;
    }
}

} // namespace

void save_model(const EtNetModel& m, const std::string& path) {
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["config"] = config_to_json(m.config);
    doc["scaler"] = {{"lo", m.scaler.lo}, {"hi", m.scaler.hi}};
    doc["series_length"] = m.series_length;

    ParamSet ps;
    mut(m).collect_w(ps);
    mut(m).collect_d(ps);
    doc["params"] = nlohmann::json::object();
    for (const Param* p : ps.items()) doc["params"][p->name] = matrix_to_json(p->value);

    doc["masks"] = {{"w_enc", masks_to_json(m.w.encoders)}, {"w_dec", masks_to_json(m.w.decoders)}};
    doc["gmm_w"] = gmm_to_json(m.gmm_w);
    doc["gmm_d"] = gmm_to_json(m.gmm_d);
    doc["energy_stats"] = {{"w_mean", m.energy_mean_w},
                           {"w_std", m.energy_std_w},
                           {"d_mean", m.energy_mean_d},
                           {"d_std", m.energy_std_d}};
    doc["training_scores"] = m.training_scores;

    std::ofstream out(path);
    require(out.good(), "io", "cannot open '" + path + "' for writing");
    out << doc.dump(1) << '\n';
    require(out.good(), "io", "write to '" + path + "' failed");
}

EtNetModel load_model(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "io", "cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        fail("io", "'" + path + "' is not valid JSON: " + e.what());
    }
    require(doc.value("format_version", -1) == 1, "config",
            "'" + path + "' has an unsupported format version");

    EtNetModel m = skeleton(config_from_json(doc.at("config")));
    m.scaler.lo = doc.at("scaler").at("lo").get<double>();
    m.scaler.hi = doc.at("scaler").at("hi").get<double>();
    m.series_length = doc.at("series_length").get<std::size_t>();

    masks_from_json(doc.at("masks").at("w_enc"), m.w.encoders, "w_enc");
    masks_from_json(doc.at("masks").at("w_dec"), m.w.decoders, "w_dec");

    ParamSet ps;
    m.collect_w(ps);
    m.collect_d(ps);
    const auto& params = doc.at("params");
    require(params.size() == ps.items().size(), "io",
            "'" + path + "' parameter count does not match the configuration");
    for (Param* p : ps.items()) {
        require(params.contains(p->name), "io", "'" + path + "' is missing '" + p->name + "'");
        Matrix v = matrix_from_json(params.at(p->name), p->name);
        require(v.rows() == p->value.rows() && v.cols() == p->value.cols(), "io",
                "'" + p->name + "' has the wrong shape for the configuration");
        p->value = v;
    }

    m.gmm_w = gmm_from_json(doc.at("gmm_w"), "gmm_w");
    m.gmm_d = gmm_from_json(doc.at("gmm_d"), "gmm_d");
    require(m.gmm_w.K == m.config.k && m.gmm_w.dim == m.config.l_c + 2, "io",
            "gmm_w does not match the configuration");
    require(m.gmm_d.K == m.config.k && m.gmm_d.dim == m.config.l_c + 2, "io",
            "gmm_d does not match the configuration");

    const auto& es = doc.at("energy_stats");
    m.energy_mean_w = es.at("w_mean").get<double>();
    m.energy_std_w = es.at("w_std").get<double>();
    m.energy_mean_d = es.at("d_mean").get<double>();
    m.energy_std_d = es.at("d_std").get<double>();
    m.training_scores = doc.at("training_scores").get<std::vector<double>>();
    return m;
}

} // namespace etnet
