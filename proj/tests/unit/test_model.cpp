#include <doctest.h>

#include "helpers.hpp"
#include "warpcode/dataset.hpp"
#include "warpcode/errors.hpp"
#include "warpcode/model.hpp"

#include <cmath>

using namespace warpcode;
using testing::random_matrix;
using testing::random_vector;

namespace {

GatedModel random_model(Rng& rng, int dim, int factors, int mappings, PoolingMode pooling, Nonlinearity nl,
                        Reconstruction rec = Reconstruction::one_sided, bool tied = false) {
    GatedModel m;
    m.U = random_matrix(rng, dim, factors);
    m.V = tied ? m.U : random_matrix(rng, dim, factors);
    m.P = pooling == PoolingMode::band ? band_pooling(factors) : Matrix(Matrix::Identity(factors, factors));
    m.W = 0.5 * random_matrix(rng, static_cast<int>(m.P.cols()), mappings);
    m.pooling = pooling;
    m.nonlinearity = nl;
    m.reconstruction = rec;
    m.tied = tied;
    return m;
}

GatedModel identity_model(int n) {
    GatedModel m;
    m.U = Matrix::Identity(n, n);
    m.V = Matrix::Identity(n, n);
    m.P = Matrix::Identity(n, n);
    m.W = Matrix::Identity(n, n);
    m.pooling = PoolingMode::identity;
    m.nonlinearity = Nonlinearity::identity;
    return m;
}

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// z_k = s(sum_j W_jk sum_f P_fj (sum_i U_if x_i)(sum_i V_if y_i)), one loop per index.
Vector naive_mappings(const GatedModel& m, const Vector& x, const Vector& y) {
    Vector z(m.mappings());
    for (int k = 0; k < m.mappings(); ++k) {
        double a = 0.0;
        for (int j = 0; j < m.pooled_factors(); ++j) {
            double pooled = 0.0;
            for (int f = 0; f < m.factors(); ++f) {
                double fx = 0.0, fy = 0.0;
                for (int i = 0; i < m.dim_x(); ++i) fx += m.U(i, f) * x[i];
                for (int i = 0; i < m.dim_y(); ++i) fy += m.V(i, f) * y[i];
                pooled += m.P(f, j) * fx * fy;
            }
            a += m.W(j, k) * pooled;
        }
        z[k] = m.nonlinearity == Nonlinearity::sigmoid ? sigmoid(a) : a;
    }
    return z;
}

Vector naive_reconstruction(const GatedModel& m, const Vector& x, const Vector& z) {
    Vector out = Vector::Zero(m.dim_y());
    for (int f = 0; f < m.factors(); ++f) {
        double fx = 0.0, gate = 0.0;
        for (int i = 0; i < m.dim_x(); ++i) fx += m.U(i, f) * x[i];
        for (int j = 0; j < m.pooled_factors(); ++j)
            for (int k = 0; k < m.mappings(); ++k) gate += m.P(f, j) * m.W(j, k) * z[k];
        for (int i = 0; i < m.dim_y(); ++i) out[i] += m.V(i, f) * fx * gate;
    }
    return out;
}

double relative_error(const Matrix& a, const Matrix& b) {
    const double scale = std::max({a.norm(), b.norm(), 1e-12});
    return (a - b).norm() / scale;
}

// Central differences over every entry of one parameter matrix. In tied
// mode U and V move together.
Matrix numeric_gradient(GatedModel m, const Matrix& X, const Matrix& Y, char which) {
    const double h = 1e-5;
    Matrix& target = which == 'U' ? m.U : which == 'V' ? m.V : m.W;
    Matrix g(target.rows(), target.cols());
    for (Eigen::Index c = 0; c < target.cols(); ++c) {
        for (Eigen::Index r = 0; r < target.rows(); ++r) {
            const double saved = target(r, c);
            target(r, c) = saved + h;
            if (m.tied && which != 'W') (which == 'U' ? m.V : m.U)(r, c) = target(r, c);
            const double up = loss_only(m, X, Y);
            target(r, c) = saved - h;
            if (m.tied && which != 'W') (which == 'U' ? m.V : m.U)(r, c) = target(r, c);
            const double down = loss_only(m, X, Y);
            target(r, c) = saved;
            if (m.tied && which != 'W') (which == 'U' ? m.V : m.U)(r, c) = saved;
            g(r, c) = (up - down) / (2 * h);
        }
    }
    return g;
}

double worst_gradient_error(const GatedModel& m, const Matrix& X, const Matrix& Y) {
    const auto lg = loss_and_gradient(m, X, Y);
    double worst = relative_error(lg.grads.U, numeric_gradient(m, X, Y, 'U'));
    worst = std::max(worst, relative_error(lg.grads.V, numeric_gradient(m, X, Y, 'V')));
    worst = std::max(worst, relative_error(lg.grads.W, numeric_gradient(m, X, Y, 'W')));
    return worst;
}

}  // namespace

TEST_CASE("infer_mappings") {
    const auto m = identity_model(5);
    for (int i = 0; i < 5; ++i) {
        Vector e = Vector::Zero(5);
        e[i] = 1.0;
        CHECK(infer_mappings(m, ImagePatch(e), ImagePatch(e)) == e);
    }

    Rng rng(1);
    auto s = random_model(rng, 6, 4, 2, PoolingMode::band, Nonlinearity::sigmoid);
    const ImagePatch zero(Vector::Zero(6));
    CHECK(mapping_preactivation(s, zero.values, random_vector(rng, 6)).isZero(0.0));
    CHECK(infer_mappings(s, zero, ImagePatch(random_vector(rng, 6))).isApproxToConstant(0.5, 0.0));

    for (auto nl : {Nonlinearity::identity, Nonlinearity::sigmoid}) {
        for (auto pooling : {PoolingMode::band, PoolingMode::identity}) {
            const auto r = random_model(rng, 6, 4, 2, pooling, nl);
            const Vector x = random_vector(rng, 6), y = random_vector(rng, 6);
            CHECK((infer_mappings(r, ImagePatch(x), ImagePatch(y)) - naive_mappings(r, x, y)).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
    CHECK_THROWS_AS(infer_mappings(s, ImagePatch(Vector::Zero(5)), zero), DimensionMismatch);
}

TEST_CASE("reconstruct") {
    Rng rng(2);
    const auto m = random_model(rng, 6, 4, 2, PoolingMode::band, Nonlinearity::sigmoid);
    const ImagePatch x(random_vector(rng, 6));
    CHECK(reconstruct(m, x, Vector::Zero(2)).values.isZero(0.0));

    const auto id = identity_model(4);
    Vector e = Vector::Zero(4);
    e[2] = 1.0;
    CHECK(reconstruct(id, ImagePatch(e), Vector::Ones(4)).values == e);

    const Vector z = random_vector(rng, 2);
    CHECK((reconstruct(m, x, z).values - naive_reconstruction(m, x.values, z)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK_THROWS_AS(reconstruct(m, x, Vector::Zero(3)), DimensionMismatch);
}

TEST_CASE("band pooling pairs adjacent factors") {
    const Matrix P = band_pooling(6);
    CHECK(P.rows() == 6);
    CHECK(P.cols() == 3);
    for (int j = 0; j < 3; ++j) {
        CHECK(P(2 * j, j) == 1.0);
        CHECK(P(2 * j + 1, j) == 1.0);
        CHECK(P.col(j).sum() == 2.0);
    }
    CHECK_THROWS(band_pooling(5));
}

TEST_CASE("gradients match central finite differences") {
    Rng rng(3);
    double worst_identity = 0.0, worst_sigmoid = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto pooling = trial % 2 ? PoolingMode::band : PoolingMode::identity;
        const auto rec = trial % 4 < 2 ? Reconstruction::one_sided : Reconstruction::symmetric;
        const bool tied = trial % 5 == 4;
        const Matrix X = random_matrix(rng, 8, 5), Y = random_matrix(rng, 8, 5);
        worst_identity = std::max(worst_identity,
                                  worst_gradient_error(random_model(rng, 8, 6, 3, pooling, Nonlinearity::identity, rec, tied), X, Y));
        worst_sigmoid = std::max(worst_sigmoid,
                                 worst_gradient_error(random_model(rng, 8, 6, 3, pooling, Nonlinearity::sigmoid, rec, tied), X, Y));
    }
    CHECK(worst_identity <= 1e-5);
    CHECK(worst_sigmoid <= 1e-4);
}

TEST_CASE("loss semantics") {
    Rng rng(4);
    const auto m = random_model(rng, 7, 4, 3, PoolingMode::band, Nonlinearity::sigmoid);
    const Matrix X = random_matrix(rng, 7, 9), Y = random_matrix(rng, 7, 9);
    const auto a = loss_and_gradient(m, X, Y);

    // Duplicating the batch keeps the mean.
    Matrix X2(7, 18), Y2(7, 18);
    X2 << X, X;
    Y2 << Y, Y;
    const auto b = loss_and_gradient(m, X2, Y2);
    CHECK(b.loss == doctest::Approx(a.loss).epsilon(1e-12));
    CHECK(relative_error(a.grads.U, b.grads.U) <= 1e-12);
    CHECK(relative_error(a.grads.V, b.grads.V) <= 1e-12);
    CHECK(relative_error(a.grads.W, b.grads.W) <= 1e-12);

    // Direct evaluation of the mean squared error.
    double direct = 0.0;
    for (int n = 0; n < 9; ++n) {
        const Vector z = naive_mappings(m, X.col(n), Y.col(n));
        direct += 0.5 * (Y.col(n) - naive_reconstruction(m, X.col(n), z)).squaredNorm();
    }
    CHECK(a.loss == doctest::Approx(direct / 9).epsilon(1e-12));

    // Targets equal to the model's own reconstruction: zero loss, zero gradient.
    auto lin = random_model(rng, 5, 4, 2, PoolingMode::identity, Nonlinearity::identity);
    lin.W.setZero();
    const Matrix Xs = random_matrix(rng, 5, 3);
    const Matrix Ys = Matrix::Zero(5, 3);
    const auto zero = loss_and_gradient(lin, Xs, Ys);
    CHECK(zero.loss == 0.0);
    CHECK(zero.grads.U.isZero(1e-14));
    CHECK(zero.grads.V.isZero(1e-14));
    CHECK(zero.grads.W.isZero(1e-14));

    Matrix bad = X;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(loss_and_gradient(m, bad, Y), DataError);
    CHECK_THROWS_AS(loss_and_gradient(m, X, Matrix(Y.leftCols(3))), DimensionMismatch);
}

TEST_CASE("energy model on the concatenation") {
    Rng rng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + rng.below(16), f = 1 + rng.below(8), k = 1 + rng.below(4);
        const Matrix U = random_matrix(rng, n, f), V = random_matrix(rng, n, f), W = random_matrix(rng, f, k);
        Matrix B(2 * n, f);
        B << U, V;
        const Vector x = random_vector(rng, n), y = random_vector(rng, n);
        const Vector quad = W.transpose() * ((U.transpose() * x).array().square() + (V.transpose() * y).array().square()).matrix();
        const Vector expected = 2 * gated_cross_term(U, V, W, x, y) + quad;
        worst = std::max(worst, (energy_forward(B, W, x, y) - expected).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-10);

    const Matrix B = random_matrix(rng, 6, 3), W = random_matrix(rng, 3, 2);
    CHECK(energy_forward(B, W, Vector::Zero(3), Vector::Zero(3)).isZero(0.0));

    Matrix b = Matrix::Zero(6, 1);
    b(0, 0) = 1.0;
    const Vector x = random_vector(rng, 3);
    CHECK(energy_forward(b, Matrix::Identity(1, 1), x, random_vector(rng, 3))[0] == doctest::Approx(x[0] * x[0]).epsilon(1e-15));
    CHECK_THROWS_AS(energy_forward(B, W, Vector::Zero(2), Vector::Zero(3)), DimensionMismatch);
}

TEST_CASE("infer_sequence") {
    Rng rng(6);
    TrainConfig cfg;
    cfg.seed = 3;
    const auto tied = init_gated_model({12, 12, 6, 3, PoolingMode::band, Nonlinearity::sigmoid, Reconstruction::one_sided, true}, cfg);
    CHECK(tied.U == tied.V);
    const auto f = testing::random_patch(rng, 12);
    CHECK(infer_sequence(tied, std::vector<ImagePatch>{f}) == infer_mappings(tied, f, f));

    const auto seq_model = random_model(rng, 12, 6, 3, PoolingMode::band, Nonlinearity::identity, Reconstruction::one_sided, true);
    std::vector<ImagePatch> zeros(3, ImagePatch(Vector::Zero(4)));
    CHECK(infer_sequence(seq_model, zeros).isZero(0.0));

    std::vector<ImagePatch> frames{testing::random_patch(rng, 4), testing::random_patch(rng, 4), testing::random_patch(rng, 4)};
    const Vector c = concatenate(frames);
    CHECK((infer_sequence(seq_model, frames) - naive_mappings(seq_model, c, c)).cwiseAbs().maxCoeff() <= 1e-12);

    auto untied = seq_model;
    untied.tied = false;
    untied.V = random_matrix(rng, 12, 6);
    CHECK_THROWS_AS(infer_sequence(untied, frames), ConfigError);
    CHECK_THROWS_AS(infer_sequence(seq_model, std::vector<ImagePatch>{frames[0]}), DimensionMismatch);
}

TEST_CASE("initialization") {
    TrainConfig cfg;
    cfg.seed = 9;
    const ModelShape shape{20, 20, 8, 4};
    const auto m = init_gated_model(shape, cfg);
    for (int f = 0; f < 8; ++f) {
        CHECK(m.U.col(f).norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(m.V.col(f).norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(m.W.cwiseAbs().maxCoeff() <= 0.1 / std::sqrt(20.0));
    CHECK(m.P == band_pooling(8));
    const auto again = init_gated_model(shape, cfg);
    CHECK(again.U == m.U);
    CHECK(again.W == m.W);
    CHECK_THROWS(init_gated_model({20, 20, 7, 4}, cfg));
}

namespace {

PairDataset shift_pairs(int count, std::uint64_t seed, Geometry g = {13, 13}) {
    DotPairOptions opts;
    opts.count = count;
    opts.geometry = g;
    opts.family = WarpFamily::cyclic_shift;
    opts.seed = seed;
    return gen_dot_pairs(opts);
}

}  // namespace

TEST_CASE("training: zero learning rate and determinism") {
    const auto data = shift_pairs(300, 1);
    const Matrix X = data.X(), Y = data.Y();
    TrainConfig cfg;
    cfg.seed = 4;
    cfg.epochs = 3;
    cfg.batch_size = 50;
    const ModelShape shape{169, 169, 10, 5};

    cfg.learning_rate = 0.0;
    auto frozen = init_gated_model(shape, cfg);
    const auto before = frozen;
    const auto flat = train(frozen, X, Y, cfg);
    REQUIRE(flat.size() == 4);
    for (double v : flat) CHECK(v == flat.front());
    CHECK(frozen.U == before.U);
    CHECK(frozen.V == before.V);
    CHECK(frozen.W == before.W);

    cfg.learning_rate = 0.01;
    auto a = init_gated_model(shape, cfg);
    auto b = init_gated_model(shape, cfg);
    const auto ta = train(a, X, Y, cfg);
    const auto tb = train(b, X, Y, cfg);
    CHECK(ta == tb);
    CHECK(a.U == b.U);
    CHECK(a.W == b.W);
    CHECK(a.P == band_pooling(10));
    for (int f = 0; f < 10; ++f) {
        CHECK(std::abs(a.U.col(f).norm() - 1.0) <= 1e-10);
        CHECK(std::abs(a.V.col(f).norm() - 1.0) <= 1e-10);
    }
    CHECK(a.U.allFinite());

    std::vector<double> seen;
    auto c = init_gated_model(shape, cfg);
    train(c, X, Y, cfg, [&](int epoch, double loss) {
        CHECK(epoch == static_cast<int>(seen.size()));
        seen.push_back(loss);
    });
    CHECK(seen == ta);
}

TEST_CASE("training on shift pairs halves the loss") {
    // Length-13 signals: F = 40 covers all six Fourier planes several times.
    const auto data = shift_pairs(4000, 2, {13, 1});
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.epochs = 30;
    cfg.learning_rate = 0.01;
    auto m = init_gated_model({13, 13, 40, 20}, cfg);
    const auto trace = train(m, data.X(), data.Y(), cfg);
    REQUIRE(trace.size() == 31);
    CHECK(trace.back() < 0.5 * trace.front());

    // 5-epoch moving average never rises after epoch 5 (small slack for SGD noise).
    std::vector<double> avg;
    for (std::size_t e = 5; e + 5 <= trace.size(); ++e) {
        double s = 0.0;
        for (std::size_t k = e; k < e + 5; ++k) s += trace[k];
        avg.push_back(s / 5);
    }
    for (std::size_t i = 1; i < avg.size(); ++i) CHECK(avg[i] <= avg[i - 1] * (1 + 1e-3));
}

TEST_CASE("training reports divergence") {
    const auto data = shift_pairs(200, 3);
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.epochs = 5;
    cfg.learning_rate = 1e6;
    cfg.momentum = 0.0;
    auto m = init_gated_model({169, 169, 10, 5, PoolingMode::band, Nonlinearity::identity}, cfg);
    CHECK_THROWS_AS(train(m, data.X(), data.Y(), cfg), DivergenceError);

    TrainConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = TrainConfig{};
    bad.momentum = 1.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = TrainConfig{};
    bad.corruption = 1.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad.corruption = -0.1;
    CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("training with masked inputs") {
    const auto data = shift_pairs(300, 6);
    const Matrix X = data.X(), Y = data.Y();
    TrainConfig cfg;
    cfg.seed = 9;
    cfg.epochs = 3;
    cfg.batch_size = 50;
    cfg.corruption = 0.5;
    const ModelShape shape{169, 169, 10, 5};

    // Masking only changes the inputs to a step, so no step means no change.
    cfg.learning_rate = 0.0;
    auto frozen = init_gated_model(shape, cfg);
    const auto before = frozen;
    train(frozen, X, Y, cfg);
    CHECK(frozen.U == before.U);

    cfg.learning_rate = 0.01;
    auto a = init_gated_model(shape, cfg);
    auto b = init_gated_model(shape, cfg);
    CHECK(train(a, X, Y, cfg) == train(b, X, Y, cfg));
    CHECK(a.U == b.U);

    // The masks are drawn per step, so the run differs from clean training.
    TrainConfig clean = cfg;
    clean.corruption = 0.0;
    auto c = init_gated_model(shape, clean);
    train(c, X, Y, clean);
    CHECK(c.U != a.U);
}

TEST_CASE("model checkpoints round-trip") {
    Rng rng(7);
    auto m = random_model(rng, 9, 6, 4, PoolingMode::band, Nonlinearity::sigmoid, Reconstruction::symmetric);
    const auto dir = testing::scratch_dir("model");
    save_model(m, dir / "ckpt");
    const auto back = load_model(dir / "ckpt");
    CHECK(back.U == m.U);
    CHECK(back.V == m.V);
    CHECK(back.P == m.P);
    CHECK(back.W == m.W);
    CHECK(back.pooling == m.pooling);
    CHECK(back.nonlinearity == m.nonlinearity);
    CHECK(back.reconstruction == m.reconstruction);
    CHECK(back.tied == m.tied);
    CHECK(std::filesystem::exists(dir / "ckpt" / "model.json"));
}

TEST_CASE("enum parsing") {
    CHECK(parse_nonlinearity(to_string(Nonlinearity::identity)) == Nonlinearity::identity);
    CHECK(parse_pooling("band") == PoolingMode::band);
    CHECK(parse_reconstruction("symmetric") == Reconstruction::symmetric);
    CHECK_THROWS_AS(parse_pooling("diagonal"), ConfigError);
}
