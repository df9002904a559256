#include "warpcode/model.hpp"

#include "warpcode/errors.hpp"
#include "warpcode/io.hpp"
#include "warpcode/parallel.hpp"
#include "warpcode/random.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace warpcode {

namespace {

// Gradient partials are computed per fixed chunk of examples and summed in
// chunk order, so results do not depend on the thread count.
constexpr Eigen::Index kChunk = 64;
constexpr double kDivergenceLoss = 1e6;

double sigmoid(double a) {
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

Matrix activate(Nonlinearity n, const Matrix& a) {
    if (n == Nonlinearity::identity) return a;
    return a.unaryExpr([](double v) { return sigmoid(v); });
}

Matrix activation_slope(Nonlinearity n, const Matrix& z) {
    if (n == Nonlinearity::identity) return Matrix::Ones(z.rows(), z.cols());
    return z.array() * (1.0 - z.array());
}

void require_rows(const Matrix& X, int rows, const char* what) {
    if (X.rows() != rows) {
        std::ostringstream msg;
        msg << what << ": expected " << rows << " rows, got " << X.rows();
        throw DimensionMismatch(msg.str());
    }
}

void normalize_columns(Matrix& M) {
    for (Eigen::Index c = 0; c < M.cols(); ++c) {
        const double n = M.col(c).norm();
        // Columns already at unit norm are left bit-identical.
        if (n > 0.0 && std::abs(n - 1.0) > 1e-13) M.col(c) /= n;
    }
}

Matrix uniform_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    Matrix M(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) M(r, c) = rng.uniform(-scale, scale);
    }
    return M;
}

struct Partial {
    double loss = 0.0;
    Gradients grads;
};

// Unnormalized (summed) loss and gradients for one block of columns. X and Y
// feed the factors; TX and TY are the reconstruction targets.
Partial chunk_gradient(const GatedModel& m, const Matrix& X, const Matrix& Y, const Matrix& TX, const Matrix& TY,
                       bool want_grads) {
    const Matrix fx = m.U.transpose() * X;
    const Matrix fy = m.V.transpose() * Y;
    const Matrix f = fx.cwiseProduct(fy);
    const Matrix pooled = m.P.transpose() * f;
    const Matrix a = m.W.transpose() * pooled;
    const Matrix z = activate(m.nonlinearity, a);
    const Matrix g = m.P * (m.W * z);
    const bool symmetric = m.reconstruction == Reconstruction::symmetric;

    const Matrix h = fx.cwiseProduct(g);
    const Matrix e = m.V * h - TY;
    Partial out;
    out.loss = 0.5 * e.squaredNorm();
    Matrix h2, e2;
    if (symmetric) {
        h2 = fy.cwiseProduct(g);
        e2 = m.U * h2 - TX;
        out.loss += 0.5 * e2.squaredNorm();
    }
    if (!want_grads) return out;

    Matrix dV = e * h.transpose();
    const Matrix dh = m.V.transpose() * e;
    Matrix dg = dh.cwiseProduct(fx);
    Matrix dfx = dh.cwiseProduct(g);
    Matrix dfy = Matrix::Zero(fy.rows(), fy.cols());
    Matrix dU = Matrix::Zero(m.U.rows(), m.U.cols());
    if (symmetric) {
        dU = e2 * h2.transpose();
        const Matrix dh2 = m.U.transpose() * e2;
        dg += dh2.cwiseProduct(fy);
        dfy += dh2.cwiseProduct(g);
    }
    const Matrix Pdg = m.P.transpose() * dg;
    const Matrix dz = m.W.transpose() * Pdg;
    Matrix dW = Pdg * z.transpose();
    const Matrix da = dz.cwiseProduct(activation_slope(m.nonlinearity, z));
    const Matrix df = m.P * (m.W * da);
    dW += pooled * da.transpose();
    dfx += df.cwiseProduct(fy);
    dfy += df.cwiseProduct(fx);
    dU += X * dfx.transpose();
    dV += Y * dfy.transpose();
    if (m.tied) {
        dU += dV;
        dV = dU;
    }
    out.grads = {std::move(dU), std::move(dV), std::move(dW)};
    return out;
}

Partial batch_gradient(const GatedModel& m, const Matrix& X, const Matrix& Y, const Matrix& TX, const Matrix& TY,
                       bool want_grads) {
    const Eigen::Index n = X.cols();
    const auto chunks = static_cast<std::size_t>((n + kChunk - 1) / kChunk);
    std::vector<Partial> parts(chunks);
    parallel_for(chunks, [&](std::size_t c) {
        const Eigen::Index begin = static_cast<Eigen::Index>(c) * kChunk;
        const Eigen::Index len = std::min(kChunk, n - begin);
        parts[c] = chunk_gradient(m, X.middleCols(begin, len), Y.middleCols(begin, len), TX.middleCols(begin, len),
                                  TY.middleCols(begin, len), want_grads);
    });
    Partial total = std::move(parts.front());
    for (std::size_t c = 1; c < chunks; ++c) {
        total.loss += parts[c].loss;
        if (want_grads) {
            total.grads.U += parts[c].grads.U;
            total.grads.V += parts[c].grads.V;
            total.grads.W += parts[c].grads.W;
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    total.loss *= inv;
    if (want_grads) {
        total.grads.U *= inv;
        total.grads.V *= inv;
        total.grads.W *= inv;
    }
    return total;
}

Partial batch_gradient(const GatedModel& m, const Matrix& X, const Matrix& Y, bool want_grads) {
    return batch_gradient(m, X, Y, X, Y, want_grads);
}

void check_batch(const GatedModel& m, const Matrix& X, const Matrix& Y) {
    validate(m);
    require_rows(X, m.dim_x(), "loss_and_gradient: X");
    require_rows(Y, m.dim_y(), "loss_and_gradient: Y");
    if (X.cols() != Y.cols()) throw DimensionMismatch("loss_and_gradient: X and Y differ in example count");
    if (X.cols() == 0) throw PreconditionError("loss_and_gradient: empty batch");
    if (!X.allFinite() || !Y.allFinite()) throw DataError("loss_and_gradient: non-finite input values");
}

}  // namespace

std::string to_string(Nonlinearity n) { return n == Nonlinearity::sigmoid ? "sigmoid" : "identity"; }
std::string to_string(PoolingMode p) { return p == PoolingMode::band ? "band" : "identity"; }
std::string to_string(Reconstruction r) { return r == Reconstruction::one_sided ? "one_sided" : "symmetric"; }

Nonlinearity parse_nonlinearity(const std::string& s) {
    if (s == "sigmoid") return Nonlinearity::sigmoid;
    if (s == "identity") return Nonlinearity::identity;
    throw ConfigError("unknown nonlinearity '" + s + "' (expected sigmoid or identity)");
}

PoolingMode parse_pooling(const std::string& s) {
    if (s == "band") return PoolingMode::band;
    if (s == "identity") return PoolingMode::identity;
    throw ConfigError("unknown pooling mode '" + s + "' (expected band or identity)");
}

Reconstruction parse_reconstruction(const std::string& s) {
    if (s == "one_sided") return Reconstruction::one_sided;
    if (s == "symmetric") return Reconstruction::symmetric;
    throw ConfigError("unknown reconstruction '" + s + "' (expected one_sided or symmetric)");
}

ModelShape GatedModel::shape() const {
    return {dim_x(), dim_y(), factors(), mappings(), pooling, nonlinearity, reconstruction, tied};
}

Matrix band_pooling(int factors) {
    if (factors < 2 || factors % 2 != 0) throw InvalidDimension("band pooling needs an even factor count");
    Matrix P = Matrix::Zero(factors, factors / 2);
    for (int j = 0; j < factors / 2; ++j) {
        P(2 * j, j) = 1.0;
        P(2 * j + 1, j) = 1.0;
    }
    return P;
}

void validate(const GatedModel& m) {
    if (m.U.cols() != m.V.cols() || m.P.rows() != m.U.cols() || m.W.rows() != m.P.cols()) {
        std::ostringstream msg;
        msg << "gated model: inconsistent shapes U " << m.U.rows() << "x" << m.U.cols() << ", V " << m.V.rows()
            << "x" << m.V.cols() << ", P " << m.P.rows() << "x" << m.P.cols() << ", W " << m.W.rows() << "x"
            << m.W.cols();
        throw DimensionMismatch(msg.str());
    }
    if (m.tied && m.U != m.V) throw ConfigError("gated model: tied flag set but U and V differ");
}

void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
        throw ConfigError("learning_rate must be a finite non-negative number");
    }
    if (cfg.epochs < 1) throw ConfigError("epochs must be positive");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
    if (!(cfg.init_scale >= 0.0)) throw ConfigError("init_scale must be positive (or 0 for the default)");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(cfg.data_scale >= 0.0)) throw ConfigError("data_scale must be positive (or 0 for the default)");
    if (!(cfg.corruption >= 0.0 && cfg.corruption < 1.0)) throw ConfigError("corruption must lie in [0, 1)");
}

GatedModel init_gated_model(const ModelShape& shape, const TrainConfig& cfg) {
    validate(cfg);
    if (shape.dim_x < 1 || shape.dim_y < 1 || shape.factors < 1 || shape.mappings < 1) {
        throw InvalidDimension("gated model: all dimensions must be positive");
    }
    if (shape.tied && shape.dim_x != shape.dim_y) throw ConfigError("tied model needs dim_x == dim_y");
    Rng rng(cfg.seed);
    GatedModel m;
    m.pooling = shape.pooling;
    m.nonlinearity = shape.nonlinearity;
    m.reconstruction = shape.reconstruction;
    m.tied = shape.tied;
    m.U = uniform_matrix(rng, shape.dim_x, shape.factors, 1.0);
    normalize_columns(m.U);
    if (shape.tied) {
        m.V = m.U;
    } else {
        m.V = uniform_matrix(rng, shape.dim_y, shape.factors, 1.0);
        normalize_columns(m.V);
    }
    m.P = shape.pooling == PoolingMode::band ? band_pooling(shape.factors) : Matrix::Identity(shape.factors, shape.factors);
    const double scale = cfg.init_scale > 0.0 ? cfg.init_scale : 0.1 / std::sqrt(static_cast<double>(shape.dim_x));
    m.W = uniform_matrix(rng, m.P.cols(), shape.mappings, scale);
    return m;
}

Vector mapping_preactivation(const GatedModel& m, const Vector& x, const Vector& y) {
    validate(m);
    if (x.size() != m.dim_x() || y.size() != m.dim_y()) {
        std::ostringstream msg;
        msg << "infer_mappings: model expects (" << m.dim_x() << ", " << m.dim_y() << "), got (" << x.size() << ", "
            << y.size() << ")";
        throw DimensionMismatch(msg.str());
    }
    const Vector f = (m.U.transpose() * x).cwiseProduct(m.V.transpose() * y);
    return m.W.transpose() * (m.P.transpose() * f);
}

Vector infer_mappings(const GatedModel& m, const ImagePatch& x, const ImagePatch& y) {
    return activate(m.nonlinearity, mapping_preactivation(m, x.values, y.values));
}

ImagePatch reconstruct(const GatedModel& m, const ImagePatch& x, const Vector& z) {
    validate(m);
    if (x.size() != m.dim_x() || z.size() != m.mappings()) {
        throw DimensionMismatch("reconstruct: x or z does not match the model");
    }
    const Vector h = (m.U.transpose() * x.values).cwiseProduct(m.P * (m.W * z));
    ImagePatch out(m.V * h);
    out.normalized = satisfies_normalization(out.values);
    return out;
}

Vector pooled_single_code(const GatedModel& m, const Vector& x) {
    if (x.size() != m.dim_x() || m.dim_x() != m.dim_y()) {
        throw DimensionMismatch("pooled_single_code: image does not match the model");
    }
    return m.P.transpose() * (m.U.transpose() * x).cwiseProduct(m.V.transpose() * x);
}

Vector infer_sequence(const GatedModel& m, std::span<const ImagePatch> frames) {
    if (!m.tied) throw ConfigError("infer_sequence requires a tied model");
    if (frames.empty()) throw PreconditionError("infer_sequence: no frames");
    const Vector c = concatenate(frames);
    if (c.size() != m.dim_x()) {
        std::ostringstream msg;
        msg << "infer_sequence: " << frames.size() << " frames give " << c.size() << " values, model expects "
            << m.dim_x();
        throw DimensionMismatch(msg.str());
    }
    return activate(m.nonlinearity, mapping_preactivation(m, c, c));
}

LossAndGradient loss_and_gradient(const GatedModel& m, const Matrix& X, const Matrix& Y) {
    check_batch(m, X, Y);
    Partial p = batch_gradient(m, X, Y, true);
    return {p.loss, std::move(p.grads)};
}

double loss_only(const GatedModel& m, const Matrix& X, const Matrix& Y) {
    check_batch(m, X, Y);
    return batch_gradient(m, X, Y, false).loss;
}

std::vector<double> train(GatedModel& m, const Matrix& X, const Matrix& Y, const TrainConfig& cfg,
                          const std::function<void(int, double)>& on_epoch) {
    validate(cfg);
    check_batch(m, X, Y);
    const double scale = cfg.data_scale > 0.0 ? cfg.data_scale : std::sqrt(static_cast<double>(m.dim_y()));
    const Matrix Xs = X * scale;
    const Matrix Ys = Y * scale;
    const Eigen::Index n = X.cols();

    auto check = [](double loss, int epoch) {
        if (!std::isfinite(loss) || loss > kDivergenceLoss) {
            std::ostringstream msg;
            msg << "training diverged in epoch " << epoch << " (loss " << loss << ")";
            throw DivergenceError(msg.str(), epoch);
        }
    };

    std::vector<double> trace{loss_only(m, Xs, Ys)};
    check(trace.back(), 0);
    if (on_epoch) on_epoch(0, trace.back());

    // Separate stream from the initializer so both can share one seed.
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    Matrix vU = Matrix::Zero(m.U.rows(), m.U.cols());
    Matrix vV = Matrix::Zero(m.V.rows(), m.V.cols());
    Matrix vW = Matrix::Zero(m.W.rows(), m.W.cols());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Matrix bx, by, cx, cy;
    auto corrupt = [&](const Matrix& clean, Matrix& out) {
        out = clean;
        for (Eigen::Index c = 0; c < out.cols(); ++c) {
            for (Eigen::Index r = 0; r < out.rows(); ++r) {
                if (rng.uniform() < cfg.corruption) out(r, c) = 0.0;
            }
        }
    };

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        if (cfg.learning_rate > 0.0) {
            for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
                const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, n - start);
                bx.resize(Xs.rows(), len);
                by.resize(Ys.rows(), len);
                for (Eigen::Index j = 0; j < len; ++j) {
                    const auto src = order[static_cast<std::size_t>(start + j)];
                    bx.col(j) = Xs.col(src);
                    by.col(j) = Ys.col(src);
                }
                Partial p;
                if (cfg.corruption > 0.0) {
                    corrupt(bx, cx);
                    corrupt(by, cy);
                    p = batch_gradient(m, cx, cy, bx, by, true);
                } else {
                    p = batch_gradient(m, bx, by, true);
                }
                check(p.loss, epoch);
                vU = cfg.momentum * vU - cfg.learning_rate * p.grads.U;
                vW = cfg.momentum * vW - cfg.learning_rate * p.grads.W;
                m.U += vU;
                m.W += vW;
                normalize_columns(m.U);
                if (m.tied) {
                    m.V = m.U;
                } else {
                    vV = cfg.momentum * vV - cfg.learning_rate * p.grads.V;
                    m.V += vV;
                    normalize_columns(m.V);
                }
            }
        }
        trace.push_back(loss_only(m, Xs, Ys));
        check(trace.back(), epoch);
        if (!m.U.allFinite() || !m.V.allFinite() || !m.W.allFinite()) {
            throw DivergenceError("training produced non-finite parameters in epoch " + std::to_string(epoch), epoch);
        }
        if (on_epoch) on_epoch(epoch, trace.back());
    }
    return trace;
}

Vector energy_forward(const Matrix& B, const Matrix& W, const Vector& x, const Vector& y) {
    if (B.rows() != x.size() + y.size()) {
        std::ostringstream msg;
        msg << "energy_forward: filters have " << B.rows() << " rows, [x; y] has " << x.size() + y.size();
        throw DimensionMismatch(msg.str());
    }
    if (W.rows() != B.cols()) throw DimensionMismatch("energy_forward: W rows differ from filter count");
    Vector xy(x.size() + y.size());
    xy << x, y;
    const Vector r = B.transpose() * xy;
    return W.transpose() * r.cwiseProduct(r);
}

Vector gated_cross_term(const Matrix& U, const Matrix& V, const Matrix& W, const Vector& x, const Vector& y) {
    if (U.rows() != x.size() || V.rows() != y.size() || U.cols() != V.cols() || W.rows() != U.cols()) {
        throw DimensionMismatch("gated_cross_term: inconsistent shapes");
    }
    return W.transpose() * (U.transpose() * x).cwiseProduct(V.transpose() * y);
}

void save_model(const GatedModel& m, const std::filesystem::path& dir) {
    validate(m);
    std::filesystem::create_directories(dir);
    save_matrix(dir / "U.wmat", m.U);
    save_matrix(dir / "V.wmat", m.V);
    save_matrix(dir / "P.wmat", m.P);
    save_matrix(dir / "W.wmat", m.W);
    nlohmann::ordered_json j;
    j["dim_x"] = m.dim_x();
    j["dim_y"] = m.dim_y();
    j["factors"] = m.factors();
    j["mappings"] = m.mappings();
    j["tied"] = m.tied;
    j["nonlinearity"] = to_string(m.nonlinearity);
    j["pooling"] = to_string(m.pooling);
    j["reconstruction"] = to_string(m.reconstruction);
    std::ofstream(dir / "model.json") << j.dump(2) << '\n';
}

GatedModel load_model(const std::filesystem::path& dir) {
    std::ifstream in(dir / "model.json");
    if (!in) throw DataError("missing model.json in " + dir.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model.json: ") + e.what());
    }
    GatedModel m;
    m.U = load_matrix(dir / "U.wmat");
    m.V = load_matrix(dir / "V.wmat");
    m.P = load_matrix(dir / "P.wmat");
    m.W = load_matrix(dir / "W.wmat");
    try {
        m.tied = j.at("tied").get<bool>();
        m.nonlinearity = parse_nonlinearity(j.at("nonlinearity").get<std::string>());
        m.pooling = parse_pooling(j.at("pooling").get<std::string>());
        m.reconstruction = parse_reconstruction(j.at("reconstruction").get<std::string>());
        if (j.at("dim_x").get<int>() != m.dim_x() || j.at("factors").get<int>() != m.factors() ||
            j.at("mappings").get<int>() != m.mappings() || j.at("dim_y").get<int>() != m.dim_y()) {
            throw DataError("model.json dimensions disagree with the stored matrices");
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model.json: ") + e.what());
    }
    validate(m);
    return m;
}

}  // namespace warpcode
