#ifndef CEVAE_TENSOR_HPP_
#define CEVAE_TENSOR_HPP_

#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cevae {

// All errors raised by the library carry a kind tag so callers (CLI, tests)
// can map them to exit codes without string matching.
enum class ErrorKind { Input, Config, Numeric, Format, Contract, Dependency };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense row-major nd-array of doubles. The whole library computes at 64-bit
// so finite-difference gradient checks are meaningful.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(count(shape), 0.0) {}
  Tensor(Shape s, double fill) : shape(std::move(s)), data(count(shape), fill) {}

  static int64_t count(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d < 1) throw Error(ErrorKind::Input, "non-positive dimension in shape " + shape_str(s));
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }
  static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

  static Tensor randn(Shape s, std::mt19937_64& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data) v = dist(rng);
    return t;
  }

  static Tensor uniform(Shape s, std::mt19937_64& rng, double lo, double hi) {
    Tensor t(std::move(s));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data) v = dist(rng);
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void require_shape(const Tensor& t, const Shape& want, const char* what) {
  if (t.shape != want)
    throw Error(ErrorKind::Input, std::string(what) + ": expected shape " + shape_str(want) +
                                      ", got " + shape_str(t.shape));
}

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

}  // namespace cevae

#endif  // CEVAE_TENSOR_HPP_
