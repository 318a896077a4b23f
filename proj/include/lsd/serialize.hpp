#pragma once

#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "lsd/common.hpp"
#include "lsd/mlp.hpp"
#include "lsd/models.hpp"

namespace lsd {

// One container for nets and models: magic, version, type tag, shape
// header, then the canonical flat float64 parameter list.  Round-trips are
// lossless (raw IEEE-754 bytes).
namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_i64(std::ostream& os, std::int64_t v) {
  os.write(reinterpret_cast<const char*>(&v), 8);
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError("container: truncated");
  return v;
}
inline std::int64_t read_i64(std::istream& is) {
  std::int64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 8)) throw FormatError("container: truncated");
  return v;
}

inline void write_container(const std::string& path, const std::string& tag,
                            const std::vector<std::int64_t>& shape, const Vec& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("container: cannot write " + path);
  f.write("LSDC", 4);
  write_u32(f, 1);
  write_u32(f, std::uint32_t(tag.size()));
  f.write(tag.data(), std::streamsize(tag.size()));
  write_u32(f, std::uint32_t(shape.size()));
  for (auto s : shape) write_i64(f, s);
  write_i64(f, params.size());
  f.write(reinterpret_cast<const char*>(params.data()), 8 * params.size());
}

struct Container {
  std::string tag;
  std::vector<std::int64_t> shape;
  Vec params;
};

inline Container read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("container: cannot open " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::string(magic, 4) != "LSDC")
    throw FormatError("container: bad magic in " + path);
  if (read_u32(f) != 1) throw FormatError("container: unsupported version");
  Container c;
  c.tag.resize(read_u32(f));
  if (!f.read(c.tag.data(), std::streamsize(c.tag.size())))
    throw FormatError("container: truncated tag");
  const std::uint32_t ns = read_u32(f);
  for (std::uint32_t i = 0; i < ns; ++i) c.shape.push_back(read_i64(f));
  const std::int64_t np = read_i64(f);
  c.params.resize(np);
  if (!f.read(reinterpret_cast<char*>(c.params.data()), 8 * np))
    throw FormatError("container: truncated parameters");
  return c;
}

inline Vec flat_rowmajor(const Mat& M) {
  Vec v(M.size());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) v(k++) = M(i, j);
  return v;
}

inline Mat unflat_rowmajor(const Vec& v, Eigen::Index rows, Eigen::Index cols,
                           Eigen::Index off = 0) {
  Mat M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = v(off + i * cols + j);
  return M;
}

}  // namespace detail

inline void save_net(const std::string& path, const MlpNet& net) {
  std::vector<std::int64_t> shape;
  shape.push_back(net.act == Activation::swish ? 0 : 1);
  for (auto d : net.layer_dims) shape.push_back(d);
  detail::write_container(path, "mlp", shape, mlp_params(net));
}

inline MlpNet load_net(const std::string& path) {
  auto c = detail::read_container(path);
  if (c.tag != "mlp") throw FormatError("load_net: tag is " + c.tag);
  Activation act = c.shape.at(0) == 0 ? Activation::swish : Activation::tanh;
  std::vector<Eigen::Index> dims(c.shape.begin() + 1, c.shape.end());
  MlpNet net = mlp_init(dims, act, 0);
  mlp_set_params(net, c.params);
  return net;
}

inline void save_model(const std::string& path, const GaussianModel& m) {
  Vec p(2 * m.dim());
  p << m.mean, m.var;
  detail::write_container(path, "gaussian", {m.dim()}, p);
}

inline void save_model(const std::string& path, const GbrbmModel& m) {
  Vec p(m.B.size() + m.b.size() + m.c.size());
  p << detail::flat_rowmajor(m.B), m.b, m.c;
  detail::write_container(path, "gbrbm", {m.dim(), m.hidden_dim()}, p);
}

inline void save_model(const std::string& path, const IcaModel& m) {
  detail::write_container(path, "ica", {m.dim()}, detail::flat_rowmajor(m.W));
}

inline void save_model(const std::string& path, const DeepEbmModel& m) {
  std::vector<std::int64_t> shape;
  shape.push_back(m.energy.act == Activation::swish ? 0 : 1);
  for (auto d : m.energy.layer_dims) shape.push_back(d);
  Vec net = mlp_params(m.energy);
  Vec p(net.size() + 2 * m.dim());
  p << net, m.envelope_mean, m.envelope_logvar;
  detail::write_container(path, "deep_ebm", shape, p);
}

inline std::unique_ptr<ScoreModel> load_model(const std::string& path) {
  auto c = detail::read_container(path);
  if (c.tag == "gaussian") {
    const Eigen::Index d = c.shape.at(0);
    return std::make_unique<GaussianModel>(Vec(c.params.head(d)), Vec(c.params.tail(d)));
  }
  if (c.tag == "gbrbm") {
    const Eigen::Index dx = c.shape.at(0), dh = c.shape.at(1);
    Mat B = detail::unflat_rowmajor(c.params, dx, dh);
    return std::make_unique<GbrbmModel>(B, Vec(c.params.segment(dx * dh, dx)),
                                        Vec(c.params.tail(dh)));
  }
  if (c.tag == "ica") {
    const Eigen::Index D = c.shape.at(0);
    return std::make_unique<IcaModel>(detail::unflat_rowmajor(c.params, D, D));
  }
  if (c.tag == "deep_ebm") {
    Activation act = c.shape.at(0) == 0 ? Activation::swish : Activation::tanh;
    std::vector<Eigen::Index> dims(c.shape.begin() + 1, c.shape.end());
    MlpNet net = mlp_init(dims, act, 0);
    const Eigen::Index np = mlp_n_params(net);
    mlp_set_params(net, c.params.head(np));
    const Eigen::Index d = net.d_in();
    return std::make_unique<DeepEbmModel>(std::move(net), Vec(c.params.segment(np, d)),
                                          Vec(c.params.tail(d)));
  }
  throw FormatError("load_model: unknown tag " + c.tag);
}

// Flat binary matrix: magic, rows, cols, row-major float64.
inline void save_matrix(const std::string& path, const Mat& M) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("matrix: cannot write " + path);
  f.write("LSDX", 4);
  detail::write_i64(f, M.rows());
  detail::write_i64(f, M.cols());
  Vec flat = detail::flat_rowmajor(M);
  f.write(reinterpret_cast<const char*>(flat.data()), 8 * flat.size());
}

inline Mat load_matrix(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("matrix: cannot open " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::string(magic, 4) != "LSDX")
    throw FormatError("matrix: bad magic in " + path);
  const Eigen::Index rows = detail::read_i64(f);
  const Eigen::Index cols = detail::read_i64(f);
  Vec flat(rows * cols);
  if (!f.read(reinterpret_cast<char*>(flat.data()), 8 * flat.size()))
    throw FormatError("matrix: truncated payload");
  return detail::unflat_rowmajor(flat, rows, cols);
}

}  // namespace lsd
