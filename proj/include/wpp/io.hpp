#pragma once

// File formats: 8-bit grayscale PNG and binary PGM (P5, maxval 255) images,
// the plain-text operator sidecar, network parameter dumps and manifests.

#include <png.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wpp/error.hpp"
#include "wpp/forward_operator.hpp"
#include "wpp/image.hpp"
#include "wpp/network.hpp"

namespace wpp::io {

namespace fs = std::filesystem;

/// intensity -> byte: round(clamp(t, 0, 1) * 255), halves rounded up.
inline std::uint8_t to_byte(double t) {
  const double c = std::clamp(t, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::floor(c + 0.5));
}

inline double from_byte(std::uint8_t v) { return static_cast<double>(v) / 255.0; }

namespace detail {

inline std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  for (auto& ch : e) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return e;
}

inline std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Image from_bytes(const std::uint8_t* data, Index rows, Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = from_byte(data[r * cols + c]);
  return Image(std::move(m));
}

inline std::vector<std::uint8_t> to_bytes(const Image& img) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(img.size()));
  for (Index r = 0; r < img.rows(); ++r)
    for (Index c = 0; c < img.cols(); ++c) out[static_cast<std::size_t>(r * img.cols() + c)] = to_byte(img(r, c));
  return out;
}

inline Image read_pgm(const fs::path& path) {
  const auto buf = read_all(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < buf.size()) {
      if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else if (std::isspace(buf[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> long {
    skip_space();
    long v = 0;
    const std::size_t start = pos;
    while (pos < buf.size() && std::isdigit(buf[pos])) v = v * 10 + (buf[pos++] - '0');
    if (pos == start) throw IoError(path.string() + ": malformed PGM header");
    return v;
  };
  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5') throw IoError(path.string() + ": not a binary PGM (P5)");
  pos = 2;
  const long w = read_int(), h = read_int(), maxval = read_int();
  if (maxval != 255) throw IoError(path.string() + ": unsupported PGM maxval " + std::to_string(maxval));
  if (w < 1 || h < 1) throw IoError(path.string() + ": empty PGM");
  if (pos >= buf.size() || !std::isspace(buf[pos])) throw IoError(path.string() + ": truncated PGM header");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (buf.size() - pos < need) throw IoError(path.string() + ": truncated PGM data");
  return from_bytes(buf.data() + pos, h, w);
}

inline void write_pgm(const Image& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.cols() << " " << img.rows() << "\n255\n";
  const auto bytes = to_bytes(img);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline Image read_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw IoError(path.string() + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(path.string() + ": " + image.message);
  }
  return from_bytes(buf.data(), image.height, image.width);
}

inline void write_png(const Image& img, const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.cols());
  image.height = static_cast<png_uint_32>(img.rows());
  image.format = PNG_FORMAT_GRAY;
  const auto bytes = to_bytes(img);
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, bytes.data(), 0, nullptr))
    throw IoError(path.string() + ": " + image.message);
}

}  // namespace detail

inline Image load_image(const fs::path& path) {
  const auto head = [&] {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char b[8] = {};
    in.read(b, 8);
    return std::string(b, static_cast<std::size_t>(in.gcount()));
  }();
  if (head.size() >= 2 && head[0] == 'P' && head[1] == '5') return detail::read_pgm(path);
  if (head.size() == 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(head.data()), 0, 8) == 0)
    return detail::read_png(path);
  throw IoError(path.string() + ": unsupported image format (expected PNG or P5 PGM)");
}

/// Format follows the extension: .pgm writes P5, anything else PNG.
inline void save_image(const Image& img, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (detail::lower_ext(path) == ".pgm") detail::write_pgm(img, path);
  else detail::write_png(img, path);
}

/// Ordered `key = value` lines; '#' starts a comment. Repeated keys are kept.
inline std::vector<std::pair<std::string, std::string>> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string{};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), trim(line.substr(eq + 1)));
  }
  return out;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// Writes the sidecar and a viewable kernel image scaled by its maximum.
/// The sidecar carries the exact coefficients; the image is for inspection.
inline void save_operator(const ForwardOperator& op, const fs::path& sidecar, const fs::path& kernel_image) {
  if (sidecar.has_parent_path()) fs::create_directories(sidecar.parent_path());
  const double scale = std::max(op.kernel.matrix().cwiseAbs().maxCoeff(), 1e-300);
  save_image(Image(Eigen::MatrixXd(op.kernel.matrix().cwiseMax(0.0) / scale)), kernel_image);
  std::ofstream out(sidecar);
  if (!out) throw IoError("cannot write " + sidecar.string());
  out << "# forward operator\n";
  out << "mode = " << (op.mode == OperatorMode::StridedConv ? "strided" : "fourier") << "\n";
  out << "stride = " << op.stride << "\n";
  out << "bias = " << format_double(op.bias) << "\n";
  out << "target_rows = " << op.target_rows << "\n";
  out << "target_cols = " << op.target_cols << "\n";
  out << "kernel_image = " << fs::relative(kernel_image, sidecar.parent_path().empty() ? "." : sidecar.parent_path()).string() << "\n";
  out << "kernel_scale = " << format_double(scale) << "\n";
  out << "kernel_rows = " << op.kernel.rows() << "\n";
  out << "kernel_cols = " << op.kernel.cols() << "\n";
  out << "kernel =";
  for (Index c = 0; c < op.kernel.cols(); ++c)
    for (Index r = 0; r < op.kernel.rows(); ++r) out << " " << format_double(op.kernel(r, c));
  out << "\n";
  if (!out) throw IoError("write failed: " + sidecar.string());
}

inline ForwardOperator load_operator(const fs::path& sidecar) {
  ForwardOperator op;
  Index kr = 0, kc = 0;
  std::string coeffs, kernel_image;
  double scale = 1.0;
  try {
    for (const auto& [k, v] : read_key_values(sidecar)) {
      if (k == "mode") {
        if (v == "strided") op.mode = OperatorMode::StridedConv;
        else if (v == "fourier") op.mode = OperatorMode::FourierDownsample;
        else throw ConfigError("unknown operator mode '" + v + "'");
      } else if (k == "stride") op.stride = std::stol(v);
      else if (k == "bias") op.bias = std::stod(v);
      else if (k == "target_rows") op.target_rows = std::stol(v);
      else if (k == "target_cols") op.target_cols = std::stol(v);
      else if (k == "kernel_rows") kr = std::stol(v);
      else if (k == "kernel_cols") kc = std::stol(v);
      else if (k == "kernel_scale") scale = std::stod(v);
      else if (k == "kernel_image") kernel_image = v;
      else if (k == "kernel") coeffs = v;
      else throw ConfigError("unknown operator key '" + k + "'");
    }
  } catch (const std::logic_error& e) {
    throw ConfigError(sidecar.string() + ": bad numeric value (" + e.what() + ")");
  }
  if (op.stride < 1) throw ConfigError(sidecar.string() + ": stride must be >= 1");
  if (!coeffs.empty()) {
    if (kr < 1 || kc < 1) throw ConfigError(sidecar.string() + ": kernel dims missing");
    std::istringstream is(coeffs);
    Eigen::MatrixXd k(kr, kc);
    for (Index c = 0; c < kc; ++c)
      for (Index r = 0; r < kr; ++r)
        if (!(is >> k(r, c))) throw ConfigError(sidecar.string() + ": too few kernel coefficients");
    op.kernel = Image(std::move(k));
  } else if (!kernel_image.empty()) {
    Image k = load_image(sidecar.parent_path() / kernel_image);
    k.matrix() *= scale;
    op.kernel = std::move(k);
  } else {
    throw ConfigError(sidecar.string() + ": no kernel");
  }
  return op;
}

inline void save_params(const NetworkParams& theta, const fs::path& path) {
  theta.validate();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "wppnet-params 1\n";
  out << "depth " << theta.arch.depth << "\nchannels " << theta.arch.channels << "\nfactor " << theta.arch.factor
      << "\ncount " << theta.values.size() << "\n";
  for (Index i = 0; i < theta.values.size(); ++i) out << format_double(theta.values(i)) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

inline NetworkParams load_params(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic, key;
  int version = 0;
  if (!(in >> magic >> version) || magic != "wppnet-params" || version != 1)
    throw IoError(path.string() + ": not a wppnet-params v1 file");
  NetworkArch arch;
  Index count = 0;
  for (auto* field : {"depth", "channels", "factor", "count"}) {
    long v = 0;
    if (!(in >> key >> v) || key != field) throw IoError(path.string() + ": expected '" + field + "'");
    if (key == "depth") arch.depth = static_cast<int>(v);
    else if (key == "channels") arch.channels = static_cast<int>(v);
    else if (key == "factor") arch.factor = v;
    else count = v;
  }
  NetworkParams theta{arch, Eigen::VectorXd(count)};
  for (Index i = 0; i < count; ++i)
    if (!(in >> theta.values(i))) throw IoError(path.string() + ": truncated parameter list");
  theta.validate();
  return theta;
}

/// Manifest: one `role = relative/path` line per written file.
class Manifest {
 public:
  explicit Manifest(fs::path dir) : dir_(std::move(dir)) {}

  fs::path add(const std::string& role, const fs::path& relative) {
    entries_.emplace_back(role, relative.generic_string());
    return dir_ / relative;
  }

  void write(const std::string& name = "manifest.txt") const {
    fs::create_directories(dir_);
    std::ofstream out(dir_ / name);
    if (!out) throw IoError("cannot write " + (dir_ / name).string());
    out << "# role = path (relative to this file)\n";
    for (const auto& [role, path] : entries_) out << role << " = " << path << "\n";
  }

  static std::vector<std::pair<std::string, fs::path>> read(const fs::path& file) {
    std::vector<std::pair<std::string, fs::path>> out;
    for (auto& [role, path] : read_key_values(file)) out.emplace_back(role, file.parent_path() / path);
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace wpp::io
