#include <doctest.h>

#include "helpers.hpp"
#include "warpcode/errors.hpp"
#include "warpcode/io.hpp"
#include "warpcode/patch.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <string>

using namespace warpcode;

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("contrast normalization") {
    const auto flat = contrast_normalize(Vector::Constant(9, 3.5));
    CHECK(flat.degenerate);
    CHECK_FALSE(flat.normalized);
    CHECK(flat.values.isZero(0.0));
    CHECK(flat.contrast_ready());

    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const Vector raw = 5.0 * testing::random_vector(rng, 2 + rng.below(30)).array() + 3.0;
        const auto p = contrast_normalize(raw);
        REQUIRE(p.normalized);
        CHECK(std::abs(p.values.mean()) <= 1e-12);
        CHECK(std::abs(p.values.norm() - 1.0) <= 1e-12);
        CHECK(satisfies_normalization(p.values));
        const auto twice = contrast_normalize(p.values);
        CHECK((twice.values - p.values).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK_FALSE(satisfies_normalization(Vector::Ones(4)));
}

TEST_CASE("stacking and concatenation") {
    std::vector<ImagePatch> ps{ImagePatch(Vector::Constant(3, 1.0)), ImagePatch(Vector::Constant(3, 2.0))};
    const Matrix M = stack_columns(ps);
    CHECK(M.cols() == 2);
    CHECK(M(1, 1) == 2.0);
    const Vector c = concatenate(ps);
    CHECK(c.size() == 6);
    CHECK(c[2] == 1.0);
    CHECK(c[3] == 2.0);
}

TEST_CASE("WMAT round-trip and layout") {
    Rng rng(2);
    const auto dir = testing::scratch_dir("wmat");
    const Matrix m = testing::random_matrix(rng, 3, 2);
    save_matrix(dir / "m.wmat", m);
    const Matrix back = load_matrix(dir / "m.wmat");
    CHECK(back == m);

    const auto bytes = read_bytes(dir / "m.wmat");
    REQUIRE(bytes.size() == kWmatHeaderBytes + 6 * 8);
    CHECK(std::memcmp(bytes.data(), "WMAT", 4) == 0);
    CHECK(bytes[4] == 1);
    CHECK(bytes[8] == 3);
    CHECK(bytes[16] == 2);
    // Payload is row-major: the second value is m(0, 1).
    double second = 0.0;
    std::memcpy(&second, bytes.data() + kWmatHeaderBytes + 8, 8);
    CHECK(second == m(0, 1));

    save_matrix(dir / "empty.wmat", Matrix(0, 0));
    CHECK(load_matrix(dir / "empty.wmat").size() == 0);
    CHECK(read_bytes(dir / "empty.wmat").size() == kWmatHeaderBytes);

    Matrix special(1, 3);
    special << std::numeric_limits<double>::infinity(), -0.0, std::numeric_limits<double>::denorm_min();
    const Matrix sb = decode_matrix(encode_matrix(special));
    CHECK(std::memcmp(sb.data(), special.data(), 3 * sizeof(double)) == 0);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_matrix(bad), FormatError);
    bad = bytes;
    bad[4] = 2;
    CHECK_THROWS_AS(decode_matrix(bad), FormatError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_matrix(bad), FormatError);
    CHECK_THROWS_AS(load_matrix(dir / "missing.wmat"), DataError);
}

TEST_CASE("IDX fixture round-trip") {
    const auto dir = testing::scratch_dir("idx");
    IdxImages imgs;
    imgs.rows = 2;
    imgs.cols = 3;
    imgs.images = {{0, 1, 2, 3, 4, 5}, {255, 128, 0, 7, 9, 11}};
    write_idx_images(dir / "img.idx", imgs);
    write_idx_labels(dir / "lbl.idx", {3, 9});

    const auto raw = read_bytes(dir / "img.idx");
    REQUIRE(raw.size() == 16 + 12);
    CHECK(raw[0] == 0x00);
    CHECK(raw[1] == 0x00);
    CHECK(raw[2] == 0x08);
    CHECK(raw[3] == 0x03);
    const auto lraw = read_bytes(dir / "lbl.idx");
    CHECK(lraw[3] == 0x01);
    CHECK(lraw.size() == 8 + 2);

    const auto back = read_idx_images(dir / "img.idx");
    CHECK(back.rows == 2);
    CHECK(back.cols == 3);
    CHECK(back.images == imgs.images);
    CHECK(read_idx_labels(dir / "lbl.idx") == std::vector<std::uint8_t>{3, 9});

    auto truncated = raw;
    truncated.resize(raw.size() - 4);
    write_bytes(dir / "short.idx", truncated);
    try {
        read_idx_images(dir / "short.idx");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        const std::string what = e.what();
        CHECK(what.find("28") != std::string::npos);
        CHECK(what.find("24") != std::string::npos);
    }

    auto wrong = raw;
    wrong[3] = 0x01;
    write_bytes(dir / "wrong.idx", wrong);
    try {
        read_idx_images(dir / "wrong.idx");
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }
}

TEST_CASE("PGM round-trip") {
    const auto dir = testing::scratch_dir("pgm");
    GrayImage img{4, 3, {}};
    for (int i = 0; i < 12; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 20));
    write_pgm(dir / "a.pgm", img);
    const auto back = read_pgm(dir / "a.pgm");
    CHECK(back.width == 4);
    CHECK(back.height == 3);
    CHECK(back.pixels == img.pixels);
    const auto bytes = read_bytes(dir / "a.pgm");
    CHECK(bytes[0] == 'P');
    CHECK(bytes[1] == '5');
    CHECK_THROWS_AS(write_pgm(dir / "b.pgm", GrayImage{5, 5, {1, 2}}), DimensionMismatch);
}

TEST_CASE("CSV tables") {
    const auto dir = testing::scratch_dir("csv");
    CsvTable t({"a", "b"});
    t.add_row({"1", CsvTable::number(0.1)});
    t.add_row({"2", CsvTable::number(-2.5e-7)});
    CHECK(t.str().rfind("a,b\n", 0) == 0);
    CHECK(std::stod(CsvTable::number(0.1)) == 0.1);
    CHECK(CsvTable::number(1.0 / 3.0) == CsvTable::number(1.0 / 3.0));
    CHECK(std::stod(CsvTable::number(1.0 / 3.0)) == 1.0 / 3.0);
    t.write(dir / "t.csv");
    const auto back = CsvTable::read(dir / "t.csv");
    CHECK(back.header() == t.header());
    CHECK(back.rows() == t.rows());
    CHECK_THROWS_AS(t.add_row({"only one"}), DimensionMismatch);

    const auto sum1 = file_checksum(dir / "t.csv");
    CHECK(sum1.size() == 16);
    t.write(dir / "u.csv");
    CHECK(file_checksum(dir / "u.csv") == sum1);
    t.add_row({"3", "4"});
    t.write(dir / "u.csv");
    CHECK(file_checksum(dir / "u.csv") != sum1);
}
