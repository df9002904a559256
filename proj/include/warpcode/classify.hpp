#pragma once

#include "warpcode/patch.hpp"

#include <span>
#include <vector>

namespace warpcode {

struct LogRegConfig {
    double l2 = 1e-3;  // penalty on the weights; the biases are not penalized
    int iterations = 500;
    bool standardize = true;  // z-score features with training statistics
};

/// Multinomial logistic regression. Features are columns.
struct LogRegModel {
    Matrix weights;  // classes x dim
    Vector bias;     // classes
    Vector feature_mean;
    Vector feature_scale;

    int classes() const { return static_cast<int>(weights.rows()); }
    std::vector<int> predict(const Matrix& X) const;
};

struct LogRegObjective {
    double loss = 0.0;
    Matrix grad_weights;
    Vector grad_bias;
};

// Mean cross-entropy plus 0.5 * l2 * |weights|^2, and its gradient.
LogRegObjective logreg_objective(const Matrix& weights, const Vector& bias, const Matrix& X, std::span<const int> labels,
                                 int classes, double l2);

/// Full-batch gradient descent with Nesterov momentum and a fixed step of
/// 1 / L, where L bounds the Lipschitz constant of the gradient. Starts from
/// zero, so the fit is deterministic. Throws DataError when fewer than two
/// classes are present.
LogRegModel fit_logreg(const Matrix& X, std::span<const int> labels, const LogRegConfig& cfg);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Euclidean k-NN with majority vote. Ties go to the label whose voting
/// neighbours have the smallest mean distance, then to the lowest label.
std::vector<int> knn_predict(const Matrix& train, std::span<const int> train_labels, const Matrix& test, int k);

std::vector<int> nearest_centroid_predict(const Matrix& train, std::span<const int> train_labels, const Matrix& test);

// Principal components of the training columns.
struct Pca {
    Vector mean;
    Matrix components;  // dim x k, orthonormal, by decreasing variance

    Matrix project(const Matrix& X) const;
};

Pca fit_pca(const Matrix& X, int components);

}  // namespace warpcode
