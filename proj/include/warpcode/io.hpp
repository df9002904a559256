#pragma once

#include "warpcode/patch.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace warpcode {

// WMAT: "WMAT", u32 version, u64 rows, u64 cols, then rows*cols f64, row
// major, all little-endian.
inline constexpr std::uint32_t kWmatVersion = 1;
inline constexpr std::size_t kWmatHeaderBytes = 24;

void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_matrix(const Matrix& m);
Matrix decode_matrix(const std::vector<std::uint8_t>& bytes);

// IDX (big-endian, magic 0x00000803 for u8 images, 0x00000801 for labels).
struct IdxImages {
    int rows = 0;
    int cols = 0;
    std::vector<std::vector<std::uint8_t>> images;
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

// Binary PGM (P5, maxval 255).
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row major
};

void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Comma-separated table with a header row. Numbers are written with
/// max_digits10 precision in the C locale so that files are byte-stable.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(std::vector<std::string> cells);
    void write(const std::filesystem::path& path) const;
    std::string str() const;

    const std::vector<std::string>& header() const { return header_; }
    const std::vector<std::vector<std::string>>& rows() const { return rows_; }

    static std::string number(double v);
    static CsvTable read(const std::filesystem::path& path);

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// FNV-1a over the file bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace warpcode
