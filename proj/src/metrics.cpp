#include "etnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace etnet {

double auc(const LabeledScores& ls) {
    const std::size_t n = ls.labels.size();
    require(n == ls.scores.size(), "shape", "auc: labels and scores differ in length");
    require(n >= 2, "shape", "auc: need at least two samples");
    std::size_t npos = 0;
    for (int l : ls.labels) {
        require(l == 0 || l == 1, "config", "auc: labels must be 0/1");
        npos += static_cast<std::size_t>(l);
    }
    std::size_t nneg = n - npos;
    require(npos > 0 && nneg > 0, "config", "auc: both classes must be present");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return ls.scores[a] < ls.scores[b]; });

    // midranks make tied pairs count exactly one half each
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && ls.scores[idx[j]] == ls.scores[idx[i]]) ++j;
        double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (ls.labels[idx[k]] == 1) pos_rank_sum += midrank;
        i = j;
    }
    double u = pos_rank_sum - 0.5 * static_cast<double>(npos) * static_cast<double>(npos + 1);
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

namespace {

std::vector<std::size_t> label_counts(const std::vector<int>& a, std::vector<int>& dense) {
    std::vector<int> uniq(a);
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    dense.resize(a.size());
    std::vector<std::size_t> counts(uniq.size(), 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::size_t k = static_cast<std::size_t>(
            std::lower_bound(uniq.begin(), uniq.end(), a[i]) - uniq.begin());
        dense[i] = static_cast<int>(k);
        ++counts[k];
    }
    return counts;
}

double entropy(const std::vector<std::size_t>& counts, std::size_t n) {
    double h = 0.0;
    for (std::size_t c : counts) {
        if (c == 0) continue;
        double p = static_cast<double>(c) / static_cast<double>(n);
        h -= p * std::log(p);
    }
    return h;
}

} // namespace

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
    require(a.size() == b.size(), "shape", "nmi: labelings differ in length");
    require(!a.empty(), "shape", "nmi: empty labelings");
    const std::size_t n = a.size();

    std::vector<int> da, db;
    std::vector<std::size_t> ca = label_counts(a, da);
    std::vector<std::size_t> cb = label_counts(b, db);
    double ha = entropy(ca, n);
    double hb = entropy(cb, n);
    if (ha == 0.0 && hb == 0.0) return 1.0;
    if (ha == 0.0 || hb == 0.0) return 0.0;

    std::vector<std::size_t> joint(ca.size() * cb.size(), 0);
    for (std::size_t i = 0; i < n; ++i)
        ++joint[static_cast<std::size_t>(da[i]) * cb.size() + static_cast<std::size_t>(db[i])];

    double mi = 0.0;
    for (std::size_t r = 0; r < ca.size(); ++r)
        for (std::size_t c = 0; c < cb.size(); ++c) {
            std::size_t cnt = joint[r * cb.size() + c];
            if (cnt == 0) continue;
            double pij = static_cast<double>(cnt) / static_cast<double>(n);
            double pi = static_cast<double>(ca[r]) / static_cast<double>(n);
            double qj = static_cast<double>(cb[c]) / static_cast<double>(n);
            mi += pij * std::log(pij / (pi * qj));
        }
    return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

namespace {

// per-point silhouettes for an arbitrary labeled point set
std::vector<double> silhouette_values(const Eigen::MatrixXd& points,
                                      const std::vector<int>& labels) {
    const std::size_t n = static_cast<std::size_t>(points.rows());
    require(labels.size() == n, "shape", "silhouette: labels and points differ in length");
    require(n >= 2, "shape", "silhouette: need at least two points");

    std::vector<int> dense;
    std::vector<std::size_t> counts = label_counts(labels, dense);
    require(counts.size() >= 2, "config", "silhouette: need at least two clusters");
    const std::size_t K = counts.size();

    std::vector<double> s(n, 0.0);
    std::vector<double> dist_sum(K);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t ki = static_cast<std::size_t>(dense[i]);
        if (counts[ki] == 1) continue; // singleton scores 0
        std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dist_sum[static_cast<std::size_t>(dense[j])] +=
                (points.row(i) - points.row(j)).norm();
        }
        double a = dist_sum[ki] / static_cast<double>(counts[ki] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) {
            if (k == ki) continue;
            b = std::min(b, dist_sum[k] / static_cast<double>(counts[k]));
        }
        double denom = std::max(a, b);
        s[i] = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return s;
}

} // namespace

double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
    std::vector<double> s = silhouette_values(points, labels);
    double sum = 0.0;
    for (double v : s) sum += v;
    return sum / static_cast<double>(s.size());
}

ScrReport scr(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
    for (int l : labels) require(l == 0 || l == 1, "config", "scr: labels must be 0/1");
    std::size_t n1 = 0;
    for (int l : labels) n1 += static_cast<std::size_t>(l);
    require(n1 > 0 && n1 < labels.size(), "config", "scr: both groups must be nonempty");

    std::vector<double> s = silhouette_values(points, labels);
    double sum0 = 0.0, sum1 = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] == 0 ? sum0 : sum1) += s[i];
    ScrReport r;
    r.normal_sc = sum0 / static_cast<double>(labels.size() - n1);
    r.abnormal_sc = sum1 / static_cast<double>(n1);
    r.ratio = std::abs(r.abnormal_sc) < 1e-9 ? std::numeric_limits<double>::infinity()
                                             : r.normal_sc / r.abnormal_sc;
    return r;
}

double euclidean(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size(), "shape", "euclidean: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s);
}

double dtw(const std::vector<double>& x, const std::vector<double>& y, long window) {
    require(!x.empty() && !y.empty(), "shape", "dtw: empty sequence");
    const std::size_t n = x.size(), m = y.size();
    long diff = static_cast<long>(n) - static_cast<long>(m);
    if (window >= 0)
        require(window >= std::abs(diff), "config",
                "dtw: window too small to connect the endpoints");

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, inf), cur(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        std::fill(cur.begin(), cur.end(), inf);
        std::size_t jlo = 1, jhi = m;
        if (window >= 0) {
            long lo = static_cast<long>(i) - window;
            long hi = static_cast<long>(i) + window;
            jlo = static_cast<std::size_t>(std::max(lo, 1L));
            jhi = static_cast<std::size_t>(std::min(hi, static_cast<long>(m)));
        }
        for (std::size_t j = jlo; j <= jhi; ++j) {
            double cost = std::abs(x[i - 1] - y[j - 1]);
            cur[j] = cost + std::min({prev[j - 1], prev[j], cur[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double edr(const std::vector<double>& x, const std::vector<double>& y, double epsilon) {
    require(epsilon >= 0.0, "config", "edr: epsilon must be non-negative");
    const std::size_t n = x.size(), m = y.size();
    std::vector<double> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<double>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<double>(i);
        for (std::size_t j = 1; j <= m; ++j) {
            double sub = std::abs(x[i - 1] - y[j - 1]) <= epsilon ? 0.0 : 1.0;
            cur[j] = std::min({prev[j - 1] + sub, prev[j] + 1.0, cur[j - 1] + 1.0});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::string metric_report(const std::string& metric, double value, std::size_t n,
                          const std::map<std::string, double>& params) {
    nlohmann::json j;
    j["metric"] = metric;
    if (std::isfinite(value))
        j["value"] = value;
    else
        j["value"] = std::isnan(value) ? "nan" : (value > 0 ? "inf" : "-inf");
    j["n"] = n;
    j["params"] = nlohmann::json::object();
    for (const auto& [k, v] : params) j["params"][k] = v;
    return j.dump();
}

} // namespace etnet
