#pragma once

#include <cmath>
#include <limits>

namespace pnstein {

/// Running sum of exp(x_i) without forming exp(x_i), rescaled whenever a new
/// maximum arrives.
class LogSumExp {
 public:
  void add(double log_term) {
    if (log_term == -std::numeric_limits<double>::infinity()) return;
    if (log_term <= max_) {
      sum_ += std::exp(log_term - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - log_term) + 1.0;
      max_ = log_term;
    }
  }

  void add(const LogSumExp& other) {
    if (other.empty()) return;
    add_scaled(other.max_, other.sum_);
  }

  bool empty() const noexcept { return sum_ == 0.0; }

  double log() const {
    return empty() ? -std::numeric_limits<double>::infinity() : max_ + std::log(sum_);
  }

 private:
  void add_scaled(double max, double sum) {
    if (max <= max_) {
      sum_ += sum * std::exp(max - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - max) + sum;
      max_ = max;
    }
  }

  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

/// Sum of signed terms given as (log|t|, sign). Positive and negative parts
/// are kept apart and combined once in result().
class SignedLogSum {
 public:
  void add(double log_abs, int sign) {
    if (sign >= 0) {
      pos_.add(log_abs);
    } else {
      neg_.add(log_abs);
    }
  }

  void add(const SignedLogSum& other) {
    pos_.add(other.pos_);
    neg_.add(other.neg_);
  }

  double log_positive() const { return pos_.log(); }
  double log_negative() const { return neg_.log(); }

  /// log of the sum of absolute values of every term added so far
  double log_abs_total() const {
    LogSumExp both = pos_;
    both.add(neg_);
    return both.log();
  }

  struct Result {
    double log_abs;
    int sign;
  };

  Result result() const {
    const double lp = pos_.log();
    const double ln = neg_.log();
    constexpr double ninf = -std::numeric_limits<double>::infinity();
    if (lp == ninf && ln == ninf) return {ninf, 1};
    if (lp >= ln) {
      if (lp == ln) return {ninf, 1};
      return {lp + std::log1p(-std::exp(ln - lp)), 1};
    }
    return {ln + std::log1p(-std::exp(lp - ln)), -1};
  }

 private:
  LogSumExp pos_;
  LogSumExp neg_;
};

}  // namespace pnstein
