#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "rigno/autodiff.hpp"

namespace rigno {

/// Named parameter tensors in creation order.
template <typename S>
struct ParamSet {
  std::vector<std::string> names;
  std::vector<ad::Mat<S>> values;

  std::size_t size() const { return values.size(); }

  std::size_t add(std::string name, ad::Mat<S> value) {
    names.push_back(std::move(name));
    values.push_back(std::move(value));
    return values.size() - 1;
  }

  ad::Index count() const {
    ad::Index n = 0;
    for (const auto& v : values) n += v.size();
    return n;
  }

  template <typename T>
  ParamSet<T> cast() const {
    ParamSet<T> out;
    out.names = names;
    for (const auto& v : values) out.values.push_back(v.template cast<T>());
    return out;
  }
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-8;
};

/// Decoupled weight decay followed by the bias-corrected Adam step.
template <typename S>
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const AdamWConfig& cfg) : cfg_(cfg) {}

  void step(ParamSet<S>& params, const std::vector<ad::Mat<S>>& grads, double lr) {
    if (grads.size() != params.size()) throw ArgumentError("AdamW: gradient count mismatch");
    if (m_.empty()) {
      for (const auto& p : params.values) {
        m_.push_back(ad::Mat<S>::Zero(p.rows(), p.cols()));
        v_.push_back(ad::Mat<S>::Zero(p.rows(), p.cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const S decay = static_cast<S>(1.0 - lr * cfg_.weight_decay);
    const S b1 = static_cast<S>(cfg_.beta1), b2 = static_cast<S>(cfg_.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params.values[i];
      const auto& g = grads[i];
      if (g.rows() != p.rows() || g.cols() != p.cols()) throw ArgumentError("AdamW: gradient shape mismatch");
      auto& m = m_[i];
      auto& v = v_[i];
      for (ad::Index k = 0; k < p.size(); ++k) {
        const S gk = g.data()[k];
        m.data()[k] = b1 * m.data()[k] + (S(1) - b1) * gk;
        v.data()[k] = b2 * v.data()[k] + (S(1) - b2) * gk * gk;
        const double mhat = static_cast<double>(m.data()[k]) / bc1;
        const double vhat = static_cast<double>(v.data()[k]) / bc2;
        p.data()[k] = static_cast<S>(static_cast<double>(p.data()[k] * decay) - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  long steps() const { return t_; }
  const std::vector<ad::Mat<S>>& first_moments() const { return m_; }
  const std::vector<ad::Mat<S>>& second_moments() const { return v_; }

 private:
  AdamWConfig cfg_;
  std::vector<ad::Mat<S>> m_, v_;
  long t_ = 0;
};

/// Warm-up, cosine decay, exponential tail, as a function of training progress.
struct LrSchedule {
  double lr_start = 1e-5;
  double lr_peak = 2e-4;
  double lr_base = 1e-5;
  double lr_final = 1e-6;
  double warmup_end = 0.02;
  double cosine_end = 0.90;

  double operator()(double fraction) const {
    const double f = std::clamp(fraction, 0.0, 1.0);
    if (f <= warmup_end) return lr_start + (lr_peak - lr_start) * (warmup_end > 0 ? f / warmup_end : 1.0);
    if (f <= cosine_end) {
      const double x = (f - warmup_end) / (cosine_end - warmup_end);
      return lr_base + 0.5 * (lr_peak - lr_base) * (1.0 + std::cos(M_PI * x));
    }
    const double x = (f - cosine_end) / (1.0 - cosine_end);
    return lr_base * std::pow(lr_final / lr_base, x);
  }
};

}  // namespace rigno
