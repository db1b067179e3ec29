#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "etnet/error.hpp"

namespace etnet {

struct LabeledScores {
    std::vector<int> labels; // 0 or 1
    std::vector<double> scores;
};

// Probability that a random positive outscores a random negative, ties
// counted half (the Mann-Whitney statistic). Needs both classes present.
double auc(const LabeledScores& ls);

// Mutual information normalized by the geometric mean of the entropies.
// Both labelings constant: 1. Exactly one constant: 0.
double nmi(const std::vector<int>& a, const std::vector<int>& b);

// Mean silhouette over all points; rows of `points` are samples. Singleton
// clusters score 0. Needs at least two clusters.
double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels);

// Silhouette ratio over the normal/abnormal two-group partition, labels 0
// normal and 1 abnormal. Both raw group means are reported with the ratio;
// a near-zero abnormal mean yields an infinite ratio.
struct ScrReport {
    double ratio;
    double normal_sc;
    double abnormal_sc;
};
ScrReport scr(const Eigen::MatrixXd& points, const std::vector<int>& labels);

double euclidean(const std::vector<double>& x, const std::vector<double>& y);

// Classic dynamic time warping with |.| local cost. A non-negative `window`
// restricts matching to |i-j| <= window and must span the length difference.
double dtw(const std::vector<double>& x, const std::vector<double>& y, long window = -1);

// Edit distance on real sequences: elements match iff |x_i - y_j| <= epsilon,
// insert/delete/substitute all cost 1.
double edr(const std::vector<double>& x, const std::vector<double>& y, double epsilon);

// One-line JSON {metric, value, n, params}; non-finite values are encoded as
// the strings "inf", "-inf", "nan".
std::string metric_report(const std::string& metric, double value, std::size_t n,
                          const std::map<std::string, double>& params);

} // namespace etnet
