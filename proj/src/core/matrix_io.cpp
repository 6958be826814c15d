#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "mrsim/core/matrix.hpp"

namespace mrsim {
namespace {

constexpr std::array<char, 8> kMagic = {'M', 'R', 'S', 'I', 'M', 'M', 'A', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
}

std::uint64_t get_u64(const std::string& in, std::size_t offset) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

std::string encode_matrix_binary(const Matrix& m) {
  std::string out;
  out.reserve(24 + 8 * static_cast<std::size_t>(m.size()));
  out.append(kMagic.data(), kMagic.size());
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      put_u64(out, std::bit_cast<std::uint64_t>(m(i, j)));
    }
  }
  return out;
}

Matrix decode_matrix_binary(const std::string& bytes) {
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError("matrix container: bad magic");
  }
  const std::uint64_t rows = get_u64(bytes, 8);
  const std::uint64_t cols = get_u64(bytes, 16);
  if (cols != 0 && rows > (bytes.size() / 8) / cols) {
    throw FormatError("matrix container: truncated payload");
  }
  if (bytes.size() != 24 + 8 * rows * cols) {
    throw FormatError("matrix container: payload size does not match header");
  }
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t offset = 24;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j, offset += 8) {
      m(i, j) = std::bit_cast<double>(get_u64(bytes, offset));
    }
  }
  if (!all_finite(m)) {
    throw FormatError("matrix container: non-finite entry");
  }
  return m;
}

void save_matrix_binary(const Matrix& m, const std::filesystem::path& path) {
  write_file(path, encode_matrix_binary(m));
}

Matrix load_matrix_binary(const std::filesystem::path& path) {
  return decode_matrix_binary(read_file(path));
}

void save_matrix_csv(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) {
        out << ',';
      }
      out << m(i, j);
    }
    out << '\n';
  }
}

Matrix load_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot open " + path.string());
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::vector<double> row;
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t end = std::min(line.find(',', start), line.size());
      const char* first = line.data() + start;
      const char* last = line.data() + end;
      while (first < last && *first == ' ') {
        ++first;
      }
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc{} || ptr != last) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad number");
      }
      if (!std::isfinite(v)) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-finite entry");
      }
      row.push_back(v);
      start = end + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

} // namespace mrsim
