#include "warpcode/classify.hpp"

#include "warpcode/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace warpcode {

namespace {

int count_classes(std::span<const int> labels) {
    int classes = 0;
    for (int l : labels) {
        if (l < 0) throw DataError("negative class label");
        classes = std::max(classes, l + 1);
    }
    return classes;
}

// Column-wise softmax probabilities for scores (classes x n).
Matrix softmax(const Matrix& scores) {
    Matrix p = scores;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
        p.col(j).array() -= p.col(j).maxCoeff();
        p.col(j) = p.col(j).array().exp();
        p.col(j) /= p.col(j).sum();
    }
    return p;
}

Matrix apply_standardization(const Matrix& X, const Vector& mean, const Vector& scale) {
    return (X.colwise() - mean).array().colwise() / scale.array();
}

}  // namespace

LogRegObjective logreg_objective(const Matrix& weights, const Vector& bias, const Matrix& X, std::span<const int> labels,
                                 int classes, double l2) {
    const Eigen::Index n = X.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n || n == 0) throw DimensionMismatch("logreg: label count differs from examples");
    if (weights.rows() != classes || weights.cols() != X.rows() || bias.size() != classes) {
        throw DimensionMismatch("logreg: parameter shapes do not match the data");
    }
    Matrix scores = weights * X;
    scores.colwise() += bias;
    Matrix p = softmax(scores);
    LogRegObjective out;
    for (Eigen::Index j = 0; j < n; ++j) {
        const int y = labels[static_cast<std::size_t>(j)];
        out.loss -= std::log(std::max(p(y, j), 1e-300));
        p(y, j) -= 1.0;
    }
    const double inv = 1.0 / static_cast<double>(n);
    out.loss = out.loss * inv + 0.5 * l2 * weights.squaredNorm();
    out.grad_weights = p * X.transpose() * inv + l2 * weights;
    out.grad_bias = p.rowwise().sum() * inv;
    return out;
}

std::vector<int> LogRegModel::predict(const Matrix& X) const {
    if (X.rows() != weights.cols()) throw DimensionMismatch("logreg predict: feature size differs from the model");
    Matrix scores = weights * apply_standardization(X, feature_mean, feature_scale);
    scores.colwise() += bias;
    std::vector<int> out(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        Eigen::Index best;
        scores.col(j).maxCoeff(&best);
        out[static_cast<std::size_t>(j)] = static_cast<int>(best);
    }
    return out;
}

LogRegModel fit_logreg(const Matrix& X, std::span<const int> labels, const LogRegConfig& cfg) {
    if (X.cols() == 0 || static_cast<Eigen::Index>(labels.size()) != X.cols()) {
        throw DimensionMismatch("fit_logreg: need one label per example");
    }
    if (!(cfg.l2 >= 0.0) || cfg.iterations < 1) throw ConfigError("fit_logreg: l2 must be >= 0 and iterations >= 1");
    if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
        throw DataError("fit_logreg: training labels contain a single class");
    }
    const int classes = count_classes(labels);
    LogRegModel m;
    const auto dim = X.rows();
    m.feature_mean = Vector::Zero(dim);
    m.feature_scale = Vector::Ones(dim);
    if (cfg.standardize) {
        m.feature_mean = X.rowwise().mean();
        const Vector sd = ((X.colwise() - m.feature_mean).array().square().rowwise().mean()).sqrt();
        for (Eigen::Index i = 0; i < dim; ++i) m.feature_scale(i) = sd(i) > 1e-12 ? sd(i) : 1.0;
    }
    const Matrix Z = apply_standardization(X, m.feature_mean, m.feature_scale);

    // Softmax cross-entropy has Hessian bounded by 0.5 * |[Z; 1]|_2^2 / n.
    Matrix aug(dim + 1, Z.cols());
    aug << Z, Matrix::Ones(1, Z.cols());
    const Eigen::SelfAdjointEigenSolver<Matrix> gram(aug * aug.transpose(), Eigen::EigenvaluesOnly);
    const double sigma_sq = std::max(gram.eigenvalues().maxCoeff(), 1e-12);
    const double lipschitz = 0.5 * sigma_sq / static_cast<double>(Z.cols()) + cfg.l2;
    const double step = 1.0 / lipschitz;

    Matrix w = Matrix::Zero(classes, dim), w_prev = w;
    Vector b = Vector::Zero(classes), b_prev = b;
    for (int it = 1; it <= cfg.iterations; ++it) {
        const double beta = (it - 1.0) / (it + 2.0);
        const Matrix wy = w + beta * (w - w_prev);
        const Vector by = b + beta * (b - b_prev);
        const LogRegObjective obj = logreg_objective(wy, by, Z, labels, classes, cfg.l2);
        w_prev = w;
        b_prev = b;
        w = wy - step * obj.grad_weights;
        b = by - step * obj.grad_bias;
    }
    m.weights = std::move(w);
    m.bias = std::move(b);
    return m;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size() || truth.empty()) throw DimensionMismatch("accuracy: size mismatch or empty");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

std::vector<int> knn_predict(const Matrix& train, std::span<const int> train_labels, const Matrix& test, int k) {
    const auto n = static_cast<int>(train.cols());
    if (n == 0) throw PreconditionError("knn: empty training set");
    if (static_cast<int>(train_labels.size()) != n) throw DimensionMismatch("knn: need one label per training example");
    if (k < 1 || k > n) throw PreconditionError("knn: k must lie in [1, train size]");
    if (test.rows() != train.rows()) throw DimensionMismatch("knn: feature sizes differ");
    const Vector train_sq = train.colwise().squaredNorm();
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(test.cols()));
    std::vector<int> order(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < test.cols(); ++j) {
        const Vector dots = train.transpose() * test.col(j);
        const double tsq = test.col(j).squaredNorm();
        std::vector<double> dist(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, train_sq(i) - 2.0 * dots(i) + tsq));
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
            const auto da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
            return da < db || (da == db && a < b);
        });
        std::map<int, std::pair<int, double>> votes;  // label -> (count, distance sum)
        for (int r = 0; r < k; ++r) {
            const int i = order[static_cast<std::size_t>(r)];
            auto& v = votes[train_labels[static_cast<std::size_t>(i)]];
            ++v.first;
            v.second += dist[static_cast<std::size_t>(i)];
        }
        int best = -1;
        for (const auto& [label, v] : votes) {  // ascending labels
            if (best < 0) {
                best = label;
                continue;
            }
            const auto& bv = votes[best];
            const double mean = v.second / v.first, best_mean = bv.second / bv.first;
            if (v.first > bv.first || (v.first == bv.first && mean < best_mean)) best = label;
        }
        out.push_back(best);
    }
    return out;
}

std::vector<int> nearest_centroid_predict(const Matrix& train, std::span<const int> train_labels, const Matrix& test) {
    if (train.cols() == 0 || static_cast<Eigen::Index>(train_labels.size()) != train.cols()) {
        throw DimensionMismatch("nearest_centroid: need one label per training example");
    }
    const int classes = count_classes(train_labels);
    Matrix centroids = Matrix::Zero(train.rows(), classes);
    Vector counts = Vector::Zero(classes);
    for (Eigen::Index j = 0; j < train.cols(); ++j) {
        const int l = train_labels[static_cast<std::size_t>(j)];
        centroids.col(l) += train.col(j);
        counts(l) += 1.0;
    }
    std::vector<int> present;
    for (int c = 0; c < classes; ++c) {
        if (counts(c) > 0) {
            centroids.col(c) /= counts(c);
            present.push_back(c);
        }
    }
    std::vector<int> out;
    for (Eigen::Index j = 0; j < test.cols(); ++j) {
        int best = present.front();
        double best_d = (centroids.col(best) - test.col(j)).squaredNorm();
        for (int c : present) {
            const double d = (centroids.col(c) - test.col(j)).squaredNorm();
            if (d < best_d) {
                best = c;
                best_d = d;
            }
        }
        out.push_back(best);
    }
    return out;
}

Matrix Pca::project(const Matrix& X) const {
    if (X.rows() != mean.size()) throw DimensionMismatch("pca: feature size differs");
    return components.transpose() * (X.colwise() - mean);
}

Pca fit_pca(const Matrix& X, int components) {
    if (X.cols() < 2) throw PreconditionError("fit_pca: need at least two examples");
    if (components < 1 || components > X.rows()) throw PreconditionError("fit_pca: component count out of range");
    Pca p;
    p.mean = X.rowwise().mean();
    const Matrix centered = X.colwise() - p.mean;
    const Matrix cov = centered * centered.transpose() / static_cast<double>(X.cols() - 1);
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    p.components = eig.eigenvectors().rowwise().reverse().leftCols(components);
    // Fix the sign so that the largest-magnitude entry is positive.
    for (Eigen::Index c = 0; c < p.components.cols(); ++c) {
        Eigen::Index i;
        p.components.col(c).cwiseAbs().maxCoeff(&i);
        if (p.components(i, c) < 0.0) p.components.col(c) *= -1.0;
    }
    return p;
}

}  // namespace warpcode
