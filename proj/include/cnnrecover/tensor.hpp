#pragma once

// Dense third-order tensors of shape k x k x k (k <= 64).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "cnnrecover/errors.hpp"

namespace cnnrecover {

inline constexpr std::size_t kMaxTensorDim = 64;

class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(std::size_t k) : k_(k), data_(k * k * k, 0.0) {
    if (k > kMaxTensorDim) throw ConfigError("tensor dimension exceeds 64");
  }

  std::size_t dim() const { return k_; }
  double& operator()(std::size_t a, std::size_t b, std::size_t c) { return data_[(a * k_ + b) * k_ + c]; }
  double operator()(std::size_t a, std::size_t b, std::size_t c) const { return data_[(a * k_ + b) * k_ + c]; }

  /// Entries in lexicographic (a, b, c) order, c fastest.
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Tensor3& operator+=(const Tensor3& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor3& operator-=(const Tensor3& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor3& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  double norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Largest |T_abc - T_pi(abc)| over the six index permutations.
  double asymmetry() const {
    double worst = 0.0;
    for (std::size_t a = 0; a < k_; ++a)
      for (std::size_t b = 0; b < k_; ++b)
        for (std::size_t c = 0; c < k_; ++c) {
          const double v = (*this)(a, b, c);
          for (double w : {(*this)(a, c, b), (*this)(b, a, c), (*this)(b, c, a), (*this)(c, a, b), (*this)(c, b, a)})
            worst = std::max(worst, std::abs(v - w));
        }
    return worst;
  }

  /// Replaces every entry by the mean over its index permutations.
  void symmetrize() {
    for (std::size_t a = 0; a < k_; ++a)
      for (std::size_t b = a; b < k_; ++b)
        for (std::size_t c = b; c < k_; ++c) {
          const double mean = ((*this)(a, b, c) + (*this)(a, c, b) + (*this)(b, a, c) + (*this)(b, c, a) +
                               (*this)(c, a, b) + (*this)(c, b, a)) / 6.0;
          (*this)(a, b, c) = (*this)(a, c, b) = (*this)(b, a, c) = (*this)(b, c, a) = (*this)(c, a, b) =
              (*this)(c, b, a) = mean;
        }
  }

  /// T(I, u, u): the vector with entries sum_bc T_abc u_b u_c.
  Eigen::VectorXd contract2(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k_));
    for (std::size_t a = 0; a < k_; ++a) {
      double s = 0.0;
      for (std::size_t b = 0; b < k_; ++b) {
        double inner = 0.0;
        for (std::size_t c = 0; c < k_; ++c) inner += (*this)(a, b, c) * u(static_cast<Eigen::Index>(c));
        s += inner * u(static_cast<Eigen::Index>(b));
      }
      out(static_cast<Eigen::Index>(a)) = s;
    }
    return out;
  }

  /// T(u, u, u).
  double contract3(const Eigen::VectorXd& u) const { return u.dot(contract2(u)); }

  /// T(M, M, M) for a k x m matrix M; the result is m x m x m.
  Tensor3 multilinear(const Eigen::MatrixXd& m) const {
    const auto rows = static_cast<std::size_t>(m.rows());
    const auto cols = static_cast<std::size_t>(m.cols());
    if (rows != k_) throw ConfigError("multilinear transform has wrong row count");
    auto at = [&](std::size_t i, std::size_t j) { return m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); };
    // Contract one mode at a time: k^3 m + k^2 m^2 + k m^3.
    std::vector<double> s1(k_ * k_ * cols, 0.0);
    for (std::size_t a = 0; a < k_; ++a)
      for (std::size_t b = 0; b < k_; ++b)
        for (std::size_t c = 0; c < k_; ++c)
          for (std::size_t z = 0; z < cols; ++z) s1[(a * k_ + b) * cols + z] += (*this)(a, b, c) * at(c, z);
    std::vector<double> s2(k_ * cols * cols, 0.0);
    for (std::size_t a = 0; a < k_; ++a)
      for (std::size_t b = 0; b < k_; ++b)
        for (std::size_t y = 0; y < cols; ++y)
          for (std::size_t z = 0; z < cols; ++z) s2[(a * cols + y) * cols + z] += s1[(a * k_ + b) * cols + z] * at(b, y);
    Tensor3 out(cols);
    for (std::size_t a = 0; a < k_; ++a)
      for (std::size_t x = 0; x < cols; ++x)
        for (std::size_t y = 0; y < cols; ++y)
          for (std::size_t z = 0; z < cols; ++z) out(x, y, z) += s2[(a * cols + y) * cols + z] * at(a, x);
    return out;
  }

  /// this += weight * v (x) v (x) v.
  void add_rank_one(double weight, const Eigen::VectorXd& v) {
    for (std::size_t a = 0; a < k_; ++a)
      for (std::size_t b = 0; b < k_; ++b) {
        const double ab = weight * v(static_cast<Eigen::Index>(a)) * v(static_cast<Eigen::Index>(b));
        for (std::size_t c = 0; c < k_; ++c) (*this)(a, b, c) += ab * v(static_cast<Eigen::Index>(c));
      }
  }

 private:
  std::size_t k_ = 0;
  std::vector<double> data_;
};

/// v (~x) I: T_abc = v_a delta_bc + v_b delta_ac + v_c delta_ab.
inline Tensor3 tilde_outer(const Eigen::VectorXd& v) {
  const auto k = static_cast<std::size_t>(v.size());
  Tensor3 t(k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t j = 0; j < k; ++j) {
      const double va = v(static_cast<Eigen::Index>(a));
      t(a, j, j) += va;
      t(j, a, j) += va;
      t(j, j, a) += va;
    }
  return t;
}

}  // namespace cnnrecover
