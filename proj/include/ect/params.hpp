#ifndef ECT_PARAMS_HPP
#define ECT_PARAMS_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ect/common.hpp"
#include "ect/tape.hpp"

namespace ect {

enum class Init { Zero, One, Xavier, Normal02 };

/// Named parameter arrays. Initialization of each array depends only on
/// (seed, name, shape), never on registration order, so a model assembled in
/// any order reproduces the same weights.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  MatX& ensure(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init) {
    auto it = arrays_.find(name);
    if (it != arrays_.end()) {
      if (it->second.rows() != rows || it->second.cols() != cols)
        throw ConfigError("ParamStore: shape mismatch for " + name);
      return it->second;
    }
    MatX m(rows, cols);
    Rng rng(sub_seed(seed_, fnv1a(name)));
    switch (init) {
      case Init::Zero:
        m.setZero();
        break;
      case Init::One:
        m.setOnes();
        break;
      case Init::Xavier: {
        const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (Eigen::Index j = 0; j < cols; ++j)
          for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
        break;
      }
      case Init::Normal02:
        for (Eigen::Index j = 0; j < cols; ++j)
          for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = 0.02 * rng.normal();
        break;
    }
    return arrays_.emplace(name, std::move(m)).first->second;
  }

  MatX& at(const std::string& name) {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ConfigError("ParamStore: missing array " + name);
    return it->second;
  }
  const MatX& at(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ConfigError("ParamStore: missing array " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return arrays_.count(name) != 0; }

  std::map<std::string, MatX>& arrays() { return arrays_; }
  const std::map<std::string, MatX>& arrays() const { return arrays_; }
  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }

 private:
  std::uint64_t seed_;
  std::map<std::string, MatX> arrays_;
};

// ---------------------------------------------------------------------------
// Named-array archive: magic, count, then per array
// (u32 name_len, name, u64 rows, u64 cols, f64 data column-major, LE).
// ---------------------------------------------------------------------------

namespace detail {
template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("archive: truncated file");
  return v;
}
}  // namespace detail

inline void save_archive(const std::map<std::string, MatX>& arrays, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("archive: cannot open for write: " + path);
  os.write("ECTARCH1", 8);
  detail::put<std::uint64_t>(os, arrays.size());
  for (const auto& [name, m] : arrays) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
  }
  if (!os) throw IoError("archive: write failed: " + path);
}

inline std::map<std::string, MatX> load_archive(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("archive: cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "ECTARCH1", 8) != 0)
    throw IoError("archive: bad magic in " + path);
  const auto count = detail::get<std::uint64_t>(is);
  std::map<std::string, MatX> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = detail::get<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    const auto rows = detail::get<std::uint64_t>(is);
    const auto cols = detail::get<std::uint64_t>(is);
    MatX m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    is.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!is) throw IoError("archive: truncated array data in " + path);
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

/// Binds store arrays to tape leaves on demand. All vars from one Bound share
/// the same requires_grad flag (frozen nets bind with trainable = false).
class Bound {
 public:
  Bound(ad::Tape<Real>& tape, ParamStore& store, bool trainable)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  ad::Var<Real> operator()(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                           Init init) {
    auto it = vars_.find(name);
    if (it != vars_.end()) return it->second;
    MatX& m = store_->ensure(name, rows, cols, init);
    ad::Var<Real> v = tape_->leaf(m, trainable_);
    vars_.emplace(name, v);
    return v;
  }

  const std::map<std::string, ad::Var<Real>>& vars() const { return vars_; }
  ad::Tape<Real>& tape() { return *tape_; }

  /// Collect gradients (after backward) keyed like the store.
  std::map<std::string, MatX> gradients() const {
    std::map<std::string, MatX> g;
    for (const auto& [name, var] : vars_) {
      const auto& node = tape_->node(var.id);
      if (node.grad_ready)
        g.emplace(name, node.grad);
      else
        g.emplace(name, MatX::Zero(node.value.rows(), node.value.cols()));
    }
    return g;
  }

 private:
  ad::Tape<Real>* tape_;
  ParamStore* store_;
  bool trainable_;
  std::map<std::string, ad::Var<Real>> vars_;
};

}  // namespace ect

#endif  // ECT_PARAMS_HPP
