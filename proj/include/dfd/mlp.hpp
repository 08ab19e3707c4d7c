#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace dfd {

// Four linear layers: in -> hidden -> hidden -> hidden -> out. Each hidden
// layer is Linear, ReLU, LayerNorm; the output is scaled to unit length.
//
// Parameters live in one flat buffer laid out layer by layer as
// weight (out x in, row-major), bias, then LayerNorm scale and shift for
// hidden layers. That is also the on-disk order.
template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using WeightMap = Eigen::Map<RowMatrix>;
  using ConstWeightMap = Eigen::Map<const RowMatrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;
  // Over-aligned so every layer view has the same alignment from run to run;
  // Eigen's vectorized reductions peel by address, and a shifting base would
  // change the summation order between otherwise identical runs.
  using Buffer = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

  static constexpr int kLayers = 4;
  static constexpr int kHidden = 3;
  static constexpr Scalar kNormEps = Scalar(1e-5);

  Mlp() = default;
  explicit Mlp(const std::array<std::uint32_t, 5>& widths) : widths_(widths) {
    std::size_t offset = 0;
    for (int l = 0; l < kLayers; ++l) {
      weight_offset_[l] = offset;
      offset += std::size_t{widths_[l + 1]} * widths_[l];
      bias_offset_[l] = offset;
      offset += widths_[l + 1];
      if (l < kHidden) {
        scale_offset_[l] = offset;
        offset += widths_[l + 1];
        shift_offset_[l] = offset;
        offset += widths_[l + 1];
      }
    }
    params_.assign(offset, Scalar(0));
  }

  const std::array<std::uint32_t, 5>& widths() const { return widths_; }
  std::size_t parameter_count() const { return params_.size(); }
  Buffer& parameters() { return params_; }
  const Buffer& parameters() const { return params_; }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases,
  // unit scale / zero shift for LayerNorm.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int l = 0; l < kLayers; ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(widths_[l]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      auto w = weight(l);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
      auto b = bias(l);
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = static_cast<Scalar>(dist(rng));
      if (l < kHidden) {
        scale(l).setOnes();
        shift(l).setZero();
      }
    }
  }

  WeightMap weight(int l) { return WeightMap(params_.data() + weight_offset_[l], widths_[l + 1], widths_[l]); }
  ConstWeightMap weight(int l) const {
    return ConstWeightMap(params_.data() + weight_offset_[l], widths_[l + 1], widths_[l]);
  }
  VectorMap bias(int l) { return VectorMap(params_.data() + bias_offset_[l], widths_[l + 1]); }
  ConstVectorMap bias(int l) const { return ConstVectorMap(params_.data() + bias_offset_[l], widths_[l + 1]); }
  VectorMap scale(int l) { return VectorMap(params_.data() + scale_offset_[l], widths_[l + 1]); }
  ConstVectorMap scale(int l) const { return ConstVectorMap(params_.data() + scale_offset_[l], widths_[l + 1]); }
  VectorMap shift(int l) { return VectorMap(params_.data() + shift_offset_[l], widths_[l + 1]); }
  ConstVectorMap shift(int l) const { return ConstVectorMap(params_.data() + shift_offset_[l], widths_[l + 1]); }

  // Activations kept for the backward pass; columns are samples.
  struct Cache {
    std::array<Matrix, kHidden> pre;      // Linear output
    std::array<Matrix, kHidden> normed;   // x-hat after LayerNorm
    std::array<RowVector, kHidden> inv_std;
    std::array<Matrix, kHidden> hidden;   // LayerNorm output, input of next layer
    Matrix raw;                           // last Linear output
    RowVector raw_norm;
    Matrix output;                        // unit-norm columns
  };

  void forward(const Matrix& input, Cache& c) const {
    const Matrix* x = &input;
    for (int l = 0; l < kHidden; ++l) {
      c.pre[l].noalias() = weight(l) * (*x);
      c.pre[l].colwise() += bias(l);
      Matrix& r = c.normed[l];
      r = c.pre[l].cwiseMax(Scalar(0));
      const RowVector mean = r.colwise().mean();
      r.rowwise() -= mean;
      const RowVector var = r.array().square().colwise().mean();
      c.inv_std[l] = (var.array() + kNormEps).rsqrt();
      r.array().rowwise() *= c.inv_std[l].array();
      c.hidden[l] = r;
      c.hidden[l].array().colwise() *= scale(l).array();
      c.hidden[l].colwise() += shift(l);
      x = &c.hidden[l];
    }
    c.raw.noalias() = weight(kHidden) * (*x);
    c.raw.colwise() += bias(kHidden);
    c.raw_norm = c.raw.colwise().norm().cwiseMax(Scalar(1e-12));
    c.output = c.raw;
    c.output.array().rowwise() /= c.raw_norm.array();
  }

  // Adds d(sum_i ||out_i - target_i||^2) * grad_scale into `grad` (flat,
  // same layout as parameters) and returns the summed loss.
  Scalar backward(const Matrix& input, const Cache& c, const Matrix& targets, Scalar grad_scale,
                  Buffer& grad) const {
    const Matrix diff = c.output - targets;
    const Scalar loss = diff.squaredNorm();

    // d loss / d out, then through the normalization out = raw / ||raw||.
    Matrix d_out = (Scalar(2) * grad_scale) * diff;
    const RowVector proj = (d_out.array() * c.output.array()).colwise().sum();
    Matrix d_raw = d_out - c.output * proj.asDiagonal();
    d_raw.array().rowwise() /= c.raw_norm.array();

    auto gw = [&](int l) {
      return WeightMap(grad.data() + weight_offset_[l], widths_[l + 1], widths_[l]);
    };
    auto gv = [&](std::size_t off, int l) { return VectorMap(grad.data() + off, widths_[l + 1]); };

    gw(kHidden).noalias() += d_raw * c.hidden[kHidden - 1].transpose();
    gv(bias_offset_[kHidden], kHidden) += d_raw.rowwise().sum();
    Matrix d_h = weight(kHidden).transpose() * d_raw;

    for (int l = kHidden - 1; l >= 0; --l) {
      const Matrix& xhat = c.normed[l];
      gv(scale_offset_[l], l) += (d_h.array() * xhat.array()).rowwise().sum().matrix();
      gv(shift_offset_[l], l) += d_h.rowwise().sum();
      Matrix d_xhat = d_h;
      d_xhat.array().colwise() *= scale(l).array();
      const RowVector mean_d = d_xhat.colwise().mean();
      const RowVector mean_dx = (d_xhat.array() * xhat.array()).colwise().mean();
      Matrix d_pre = d_xhat;
      d_pre.rowwise() -= mean_d;
      d_pre.array() -= xhat.array().rowwise() * mean_dx.array();
      d_pre.array().rowwise() *= c.inv_std[l].array();
      d_pre = (c.pre[l].array() > Scalar(0)).select(d_pre, Scalar(0));

      const Matrix& x = l == 0 ? input : c.hidden[l - 1];
      gw(l).noalias() += d_pre * x.transpose();
      gv(bias_offset_[l], l) += d_pre.rowwise().sum();
      if (l > 0) d_h = weight(l).transpose() * d_pre;
    }
    return loss;
  }

 private:
  std::array<std::uint32_t, 5> widths_{};
  std::array<std::size_t, kLayers> weight_offset_{}, bias_offset_{};
  std::array<std::size_t, kHidden> scale_offset_{}, shift_offset_{};
  Buffer params_;
};

// Fourier positional encoding: [q, sin(2^l pi q), cos(2^l pi q)] for l < bands.
template <typename Scalar>
inline void encode_position(const Scalar q[3], std::uint32_t bands, Scalar* out) {
  constexpr double kPi = 3.14159265358979323846;
  out[0] = q[0];
  out[1] = q[1];
  out[2] = q[2];
  std::size_t k = 3;
  for (std::uint32_t l = 0; l < bands; ++l) {
    const double f = std::ldexp(kPi, static_cast<int>(l));
    for (int a = 0; a < 3; ++a) {
      const double arg = f * static_cast<double>(q[a]);
      out[k++] = static_cast<Scalar>(std::sin(arg));
      out[k++] = static_cast<Scalar>(std::cos(arg));
    }
  }
}

inline std::uint32_t encoded_width(std::uint32_t bands) { return 3 + 6 * bands; }

}  // namespace dfd
