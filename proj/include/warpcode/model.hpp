#pragma once

#include "warpcode/patch.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace warpcode {

enum class Nonlinearity { sigmoid, identity };
enum class PoolingMode { band, identity };
enum class Reconstruction { one_sided, symmetric };

std::string to_string(Nonlinearity n);
std::string to_string(PoolingMode p);
std::string to_string(Reconstruction r);
Nonlinearity parse_nonlinearity(const std::string& s);
PoolingMode parse_pooling(const std::string& s);
Reconstruction parse_reconstruction(const std::string& s);

struct ModelShape {
    int dim_x = 0;
    int dim_y = 0;
    int factors = 0;   // F
    int mappings = 0;  // K
    PoolingMode pooling = PoolingMode::band;
    Nonlinearity nonlinearity = Nonlinearity::sigmoid;
    Reconstruction reconstruction = Reconstruction::one_sided;
    bool tied = false;
};

/// Factored gated model.
///
/// Mapping units: z = s(W^T P^T ((U^T x) * (V^T y))). Reconstruction of y
/// given x: y_hat = V ((U^T x) * (P W z)). With symmetric reconstruction the
/// model also predicts x_hat = U ((V^T y) * (P W z)) and sums both losses.
/// P is never trained. In tied mode U and V hold the same values.
struct GatedModel {
    Matrix U;  // dim_x x F
    Matrix V;  // dim_y x F
    Matrix P;  // F x F'
    Matrix W;  // F' x K
    PoolingMode pooling = PoolingMode::band;
    Nonlinearity nonlinearity = Nonlinearity::sigmoid;
    Reconstruction reconstruction = Reconstruction::one_sided;
    bool tied = false;

    int dim_x() const { return static_cast<int>(U.rows()); }
    int dim_y() const { return static_cast<int>(V.rows()); }
    int factors() const { return static_cast<int>(U.cols()); }
    int pooled_factors() const { return static_cast<int>(P.cols()); }
    int mappings() const { return static_cast<int>(W.cols()); }
    ModelShape shape() const;
};

// Non-overlapping pairs: column j sums factors 2j and 2j+1. F must be even.
Matrix band_pooling(int factors);

// Throws on inconsistent matrix sizes or a tied model with U != V.
void validate(const GatedModel& m);

struct TrainConfig {
    double learning_rate = 0.01;
    int epochs = 30;
    int batch_size = 100;
    std::uint64_t seed = 0;
    double init_scale = 0.0;  // 0 selects 0.1 / sqrt(dim_x)
    double momentum = 0.9;
    double data_scale = 0.0;  // 0 selects sqrt(dim_y); see train()
    // Fraction of input entries zeroed per step (independent masks for x and y);
    // the reconstruction target stays clean. 0 disables it.
    double corruption = 0.0;
};

void validate(const TrainConfig& cfg);

// U, V: uniform(-1, 1) columns rescaled to unit norm. W: uniform(-init_scale, init_scale).
GatedModel init_gated_model(const ModelShape& shape, const TrainConfig& cfg);

Vector mapping_preactivation(const GatedModel& m, const Vector& x, const Vector& y);
Vector infer_mappings(const GatedModel& m, const ImagePatch& x, const ImagePatch& y);
ImagePatch reconstruct(const GatedModel& m, const ImagePatch& x, const Vector& z);

// Single-image code P^T ((U^T x) * (V^T x)), the first-level pooled responses.
Vector pooled_single_code(const GatedModel& m, const Vector& x);

// The tied model applied to the concatenated frames, with x = y.
Vector infer_sequence(const GatedModel& m, std::span<const ImagePatch> frames);

struct Gradients {
    Matrix U;
    Matrix V;
    Matrix W;
};

struct LossAndGradient {
    double loss = 0.0;
    Gradients grads;
};

// Columns of X and Y are paired examples. Loss is the batch mean of
// 0.5 * |y - y_hat|^2 (plus the x term in symmetric mode).
LossAndGradient loss_and_gradient(const GatedModel& m, const Matrix& X, const Matrix& Y);
double loss_only(const GatedModel& m, const Matrix& X, const Matrix& Y);

/// Minibatch SGD with momentum. Columns of U and V are renormalized after
/// each step. The data are multiplied by data_scale before training because
/// unit-norm patches put the factor responses at ~1/sqrt(dim) and learning
/// stalls; with sqrt(dim) each pixel has roughly unit variance.
///
/// Returns the full-data loss (in scaled units) before training followed by
/// one value per epoch. Throws DivergenceError when the loss exceeds 1e6 or
/// becomes NaN.
std::vector<double> train(GatedModel& m, const Matrix& X, const Matrix& Y, const TrainConfig& cfg,
                          const std::function<void(int epoch, double loss)>& on_epoch = {});

// Energy model on the concatenation [x; y]: W^T ((B^T [x; y])^2).
Vector energy_forward(const Matrix& B, const Matrix& W, const Vector& x, const Vector& y);
// W^T ((U^T x) * (V^T y)).
Vector gated_cross_term(const Matrix& U, const Matrix& V, const Matrix& W, const Vector& x, const Vector& y);

// Checkpoint directory: U/V/P/W as WMAT plus model.json.
void save_model(const GatedModel& m, const std::filesystem::path& dir);
GatedModel load_model(const std::filesystem::path& dir);

}  // namespace warpcode
