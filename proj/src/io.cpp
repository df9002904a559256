#include "warpcode/io.hpp"

#include "warpcode/errors.hpp"

#include <bit>
#include <charconv>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace warpcode {

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t offset) {
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(in[offset + i]) << (8 * i);
    return value;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

std::uint32_t get_be32(const std::vector<std::uint8_t>& in, std::size_t offset) {
    if (in.size() < offset + 4) {
        throw FormatError("IDX header truncated: expected " + std::to_string(offset + 4) + " bytes, got " +
                              std::to_string(in.size()),
                          in.size());
    }
    return (std::uint32_t{in[offset]} << 24) | (std::uint32_t{in[offset + 1]} << 16) |
           (std::uint32_t{in[offset + 2]} << 8) | std::uint32_t{in[offset + 3]};
}

void require_length(const std::vector<std::uint8_t>& bytes, std::uint64_t expected, const char* what) {
    if (bytes.size() != expected) {
        std::ostringstream msg;
        msg << what << ": expected " << expected << " bytes, got " << bytes.size();
        throw FormatError(msg.str(), std::min<std::uint64_t>(bytes.size(), expected));
    }
}

}  // namespace

std::vector<std::uint8_t> encode_matrix(const Matrix& m) {
    std::vector<std::uint8_t> out;
    out.reserve(kWmatHeaderBytes + 8 * static_cast<std::size_t>(m.size()));
    for (char c : {'W', 'M', 'A', 'T'}) out.push_back(static_cast<std::uint8_t>(c));
    put_le<std::uint32_t>(out, kWmatVersion);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(m(r, c)));
    }
    return out;
}

Matrix decode_matrix(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kWmatHeaderBytes) {
        throw FormatError("WMAT header truncated: expected " + std::to_string(kWmatHeaderBytes) + " bytes, got " +
                              std::to_string(bytes.size()),
                          bytes.size());
    }
    if (std::memcmp(bytes.data(), "WMAT", 4) != 0) throw FormatError("bad WMAT magic", 0);
    const auto version = get_le<std::uint32_t>(bytes, 4);
    if (version != kWmatVersion) throw FormatError("unsupported WMAT version " + std::to_string(version), 4);
    const auto rows = get_le<std::uint64_t>(bytes, 8);
    const auto cols = get_le<std::uint64_t>(bytes, 16);
    const std::uint64_t limit = (std::numeric_limits<std::uint64_t>::max() - kWmatHeaderBytes) / 8;
    if (cols != 0 && rows > limit / cols) throw FormatError("WMAT dimensions overflow", 8);
    require_length(bytes, kWmatHeaderBytes + 8 * rows * cols, "WMAT payload");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::size_t offset = kWmatHeaderBytes;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c, offset += 8) {
            m(r, c) = std::bit_cast<double>(get_le<std::uint64_t>(bytes, offset));
        }
    }
    return m;
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) { write_bytes(path, encode_matrix(m)); }

Matrix load_matrix(const std::filesystem::path& path) { return decode_matrix(read_bytes(path)); }

IdxImages read_idx_images(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    const auto magic = get_be32(bytes, 0);
    if (magic != 0x803) throw FormatError("bad IDX image magic " + std::to_string(magic), 0);
    const auto count = get_be32(bytes, 4);
    IdxImages out;
    out.rows = static_cast<int>(get_be32(bytes, 8));
    out.cols = static_cast<int>(get_be32(bytes, 12));
    const std::uint64_t each = std::uint64_t{static_cast<std::uint32_t>(out.rows)} * static_cast<std::uint32_t>(out.cols);
    require_length(bytes, 16 + each * count, "IDX images");
    out.images.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto begin = bytes.begin() + static_cast<std::ptrdiff_t>(16 + each * i);
        out.images.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(each));
    }
    return out;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    const auto magic = get_be32(bytes, 0);
    if (magic != 0x801) throw FormatError("bad IDX label magic " + std::to_string(magic), 0);
    const auto count = get_be32(bytes, 4);
    require_length(bytes, 8 + std::uint64_t{count}, "IDX labels");
    return {bytes.begin() + 8, bytes.end()};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
    std::vector<std::uint8_t> out;
    put_be32(out, 0x803);
    put_be32(out, static_cast<std::uint32_t>(images.images.size()));
    put_be32(out, static_cast<std::uint32_t>(images.rows));
    put_be32(out, static_cast<std::uint32_t>(images.cols));
    for (const auto& img : images.images) {
        if (img.size() != static_cast<std::size_t>(images.rows * images.cols)) {
            throw DimensionMismatch("write_idx_images: image size does not match rows x cols");
        }
        out.insert(out.end(), img.begin(), img.end());
    }
    write_bytes(path, out);
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> out;
    put_be32(out, 0x801);
    put_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    write_bytes(path, out);
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
    if (image.pixels.size() != static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height)) {
        throw DimensionMismatch("write_pgm: pixel count does not match width x height");
    }
    const std::string header =
        "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    write_bytes(path, out);
}

GrayImage read_pgm(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&] {
        skip_space();
        const std::size_t start = pos;
        int value = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) value = value * 10 + (bytes[pos++] - '0');
        if (pos == start) throw FormatError("PGM header: expected a number", pos);
        return value;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("not a P5 PGM file", 0);
    pos = 2;
    GrayImage img;
    img.width = read_int();
    img.height = read_int();
    const int maxval = read_int();
    if (maxval != 255) throw FormatError("PGM maxval must be 255", pos);
    ++pos;  // single whitespace byte before the raster
    const std::size_t need = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
    if (bytes.size() < pos + need) {
        throw FormatError("PGM raster truncated: expected " + std::to_string(pos + need) + " bytes, got " +
                              std::to_string(bytes.size()),
                          bytes.size());
    }
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                      bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

void CsvTable::add_row(std::vector<std::string> cells) {
    if (cells.size() != header_.size()) throw DimensionMismatch("CsvTable: row width differs from header");
    rows_.push_back(std::move(cells));
}

std::string CsvTable::number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general,
                                   std::numeric_limits<double>::max_digits10);
    return {buf, res.ptr};
}

std::string CsvTable::str() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out;
}

void CsvTable::write(const std::filesystem::path& path) const {
    const std::string s = str();
    write_bytes(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

CsvTable CsvTable::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(line);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty CSV file " + path.string());
    CsvTable table(split(line));
    while (std::getline(in, line)) {
        if (!line.empty()) table.add_row(split(line));
    }
    return table;
}

std::string file_checksum(const std::filesystem::path& path) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : read_bytes(path)) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace warpcode
