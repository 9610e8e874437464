#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <thread>
#include <vector>

#include "pnstein/error.hpp"
#include "pnstein/params.hpp"
#include "pnstein/stein.hpp"

namespace pnstein {

/// `count` draws split into consecutive batches of `batch` draws. Batch b
/// always uses the stream derived from (seed, b), so results do not depend
/// on the number of worker threads.
struct SamplerConfig {
  std::uint64_t seed = 42;
  std::int64_t count = 1'000'000;
  std::int64_t batch = 65'536;
  unsigned threads = 0;  // 0: hardware concurrency

  void check() const {
    if (count < 1) throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
    if (batch < 1 || batch > count) throw Error(ErrorCode::InvalidArgument, "batch must be in [1, count]");
  }
  std::int64_t batches() const { return (count + batch - 1) / batch; }
  std::int64_t batch_size(std::int64_t b) const { return std::min(batch, count - b * batch); }
};

struct EstimateWithError {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::int64_t count = 0;

  double z_score() const {
    if (stderr_ > 0.0) return mean / stderr_;
    return mean == 0.0 ? 0.0 : std::copysign(INFINITY, mean);
  }
};

struct ComplexEstimate {
  EstimateWithError re;
  EstimateWithError im;
  std::complex<double> value() const { return {re.mean, im.mean}; }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 batch_engine(std::uint64_t seed, std::int64_t batch) {
  std::uint64_t state = seed ^ (0xd1b54a32d192ed03ULL * static_cast<std::uint64_t>(batch + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(state)), static_cast<std::uint32_t>(splitmix64(state)),
                    static_cast<std::uint32_t>(splitmix64(state)), static_cast<std::uint32_t>(splitmix64(state))};
  return std::mt19937_64(seq);
}

/// Running means and centred sums of squares for several statistics at once.
struct MultiWelford {
  std::int64_t n = 0;
  std::vector<double> mean;
  std::vector<double> m2;

  explicit MultiWelford(std::size_t k = 0) : mean(k, 0.0), m2(k, 0.0) {}

  void add(const std::vector<double>& x) {
    ++n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(n);
      m2[i] += d * (x[i] - mean[i]);
    }
  }

  void merge(const MultiWelford& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double na = static_cast<double>(n);
    const double nb = static_cast<double>(o.n);
    const double nt = na + nb;
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const double d = o.mean[i] - mean[i];
      mean[i] += d * nb / nt;
      m2[i] += o.m2[i] + d * d * na * nb / nt;
    }
    n += o.n;
  }

  EstimateWithError estimate(std::size_t i) const {
    EstimateWithError e;
    e.mean = mean[i];
    e.count = n;
    e.stderr_ = n > 1 ? std::sqrt(m2[i] / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return e;
  }
};

/// Runs `body(engine, b, acc)` for every batch, possibly in parallel, and
/// merges the per-batch accumulators pairwise in a fixed tree order.
template <class Body>
MultiWelford run_batches(const SamplerConfig& cfg, std::size_t stats, Body&& body) {
  cfg.check();
  const std::int64_t nb = cfg.batches();
  std::vector<MultiWelford> parts(static_cast<std::size_t>(nb), MultiWelford(stats));
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::int64_t>(threads, nb));
  auto work = [&](unsigned tid) {
    for (std::int64_t b = tid; b < nb; b += threads) {
      auto eng = batch_engine(cfg.seed, b);
      body(eng, b, parts[static_cast<std::size_t>(b)]);
    }
  };
  if (threads <= 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& t : pool) t.join();
  }
  for (std::size_t width = 1; width < parts.size(); width *= 2) {
    for (std::size_t i = 0; i + width < parts.size(); i += 2 * width) parts[i].merge(parts[i + width]);
  }
  return parts.front();
}

}  // namespace detail

/// Draws the mean of n products X Y with X = mu_x + sigma_x U and
/// Y = mu_y + sigma_y (rho U + sqrt(1 - rho^2) V).
class MeanProductSampler {
 public:
  explicit MeanProductSampler(const MeanParams& mp)
      : mx_(mp.base().mu_x()),
        my_(mp.base().mu_y()),
        sx_(mp.base().sigma_x()),
        sy_(mp.base().sigma_y()),
        rho_(mp.base().rho()),
        rc_(std::sqrt(1.0 - mp.base().rho() * mp.base().rho())),
        n_(mp.n()) {}

  template <class Engine>
  double operator()(Engine& eng) {
    double sum = 0.0;
    for (int i = 0; i < n_; ++i) {
      const double u = normal_(eng);
      const double v = normal_(eng);
      sum += (mx_ + sx_ * u) * (my_ + sy_ * (rho_ * u + rc_ * v));
    }
    return sum / n_;
  }

 private:
  double mx_, my_, sx_, sy_, rho_, rc_;
  int n_;
  std::normal_distribution<double> normal_;
};

class NormalSampler {
 public:
  NormalSampler(double mean, double variance) : dist_(mean, std::sqrt(variance)) {
    if (!(variance > 0.0)) throw Error(ErrorCode::InvalidArgument, "normal variance must be positive");
  }
  template <class Engine>
  double operator()(Engine& eng) {
    return dist_(eng);
  }

 private:
  std::normal_distribution<double> dist_;
};

/// Mean and standard error of each g_i(W) for draws W from `make_sampler()`.
/// Every batch constructs its own sampler so that no state leaks between
/// batches.
template <class MakeSampler>
std::vector<EstimateWithError> estimate_functionals(MakeSampler&& make_sampler,
                                                    const std::vector<std::function<double(double)>>& gs,
                                                    const SamplerConfig& cfg) {
  const auto acc = detail::run_batches(cfg, gs.size(), [&](auto& eng, std::int64_t b, detail::MultiWelford& w) {
    auto sampler = make_sampler();
    std::vector<double> row(gs.size());
    for (std::int64_t i = 0; i < cfg.batch_size(b); ++i) {
      const double x = sampler(eng);
      for (std::size_t k = 0; k < gs.size(); ++k) row[k] = gs[k](x);
      w.add(row);
    }
  });
  std::vector<EstimateWithError> out;
  for (std::size_t k = 0; k < gs.size(); ++k) out.push_back(acc.estimate(k));
  return out;
}

/// All draws of the mean of n products, in batch order.
inline std::vector<double> sample_mean_of_products(const MeanParams& mp, const SamplerConfig& cfg) {
  cfg.check();
  std::vector<double> out(static_cast<std::size_t>(cfg.count));
  for (std::int64_t b = 0; b < cfg.batches(); ++b) {
    auto eng = detail::batch_engine(cfg.seed, b);
    MeanProductSampler sampler(mp);
    for (std::int64_t i = 0; i < cfg.batch_size(b); ++i) out[static_cast<std::size_t>(b * cfg.batch + i)] = sampler(eng);
  }
  return out;
}

/// E[A f(W)] for several test functions from one set of draws.
inline std::vector<EstimateWithError> estimate_stein_expectations(const MeanParams& mp,
                                                                  const SteinOperatorSpec<double>& spec,
                                                                  const std::vector<TestFunction>& fs,
                                                                  const SamplerConfig& cfg) {
  std::vector<std::function<double(double)>> gs;
  for (const auto& f : fs) gs.emplace_back([&spec, f](double x) { return apply(spec, f, x); });
  return estimate_functionals([&] { return MeanProductSampler(mp); }, gs, cfg);
}

inline EstimateWithError estimate_stein_expectation(const MeanParams& mp, const SteinOperatorSpec<double>& spec,
                                                    const TestFunction& f, const SamplerConfig& cfg) {
  return estimate_stein_expectations(mp, spec, {f}, cfg).front();
}

/// The same expectation under a normal law, e.g. one with the mean and
/// variance of W; a nonzero answer shows the operator tells the laws apart.
inline EstimateWithError estimate_stein_expectation_normal(double mean, double variance,
                                                           const SteinOperatorSpec<double>& spec,
                                                           const TestFunction& f, const SamplerConfig& cfg) {
  std::vector<std::function<double(double)>> gs{[&](double x) { return apply(spec, f, x); }};
  return estimate_functionals([&] { return NormalSampler(mean, variance); }, gs, cfg).front();
}

/// E[variance f'(N) - (N - mean) f(N)] for N ~ Normal(mean, variance),
/// which vanishes for the normal law.
inline EstimateWithError estimate_normal_stein(double mean, double variance, const TestFunction& f,
                                               const SamplerConfig& cfg) {
  std::vector<std::function<double(double)>> gs{[&](double x) {
    const Derivatives d = f(x);
    return variance * d[1] - (x - mean) * d[0];
  }};
  return estimate_functionals([&] { return NormalSampler(mean, variance); }, gs, cfg).front();
}

/// Empirical characteristic function at each t from one set of draws.
inline std::vector<ComplexEstimate> estimate_cf(const MeanParams& mp, const std::vector<double>& ts,
                                                const SamplerConfig& cfg) {
  std::vector<std::function<double(double)>> gs;
  for (double t : ts) {
    gs.emplace_back([t](double x) { return std::cos(t * x); });
    gs.emplace_back([t](double x) { return std::sin(t * x); });
  }
  const auto e = estimate_functionals([&] { return MeanProductSampler(mp); }, gs, cfg);
  std::vector<ComplexEstimate> out;
  for (std::size_t i = 0; i < ts.size(); ++i) out.push_back({e[2 * i], e[2 * i + 1]});
  return out;
}

inline ComplexEstimate estimate_cf(const MeanParams& mp, double t, const SamplerConfig& cfg) {
  return estimate_cf(mp, std::vector<double>{t}, cfg).front();
}

/// E[W^k] or, with `central`, E[(W - EW)^k] where EW is replaced by the
/// sample mean from a first pass over the same draws. The reported standard
/// error ignores the uncertainty of that plug-in mean.
inline EstimateWithError estimate_moment(const MeanParams& mp, int k, bool central, const SamplerConfig& cfg) {
  if (k < 0) throw Error(ErrorCode::InvalidArgument, "moment order must be nonnegative");
  auto make = [&] { return MeanProductSampler(mp); };
  double centre = 0.0;
  if (central) {
    centre = estimate_functionals(make, {[](double x) { return x; }}, cfg).front().mean;
  }
  return estimate_functionals(make, {[k, centre](double x) { return std::pow(x - centre, k); }}, cfg).front();
}

}  // namespace pnstein
