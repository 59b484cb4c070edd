#include "hmt/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>

#include "hmt/errors.hpp"

namespace hmt {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw UsageError("mean: empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw UsageError("sample_variance: needs at least two values");
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

Comparison compare_runs(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw ConfigError(FieldError{"series", "need at least two seeds per side"});
  Comparison c;
  c.mean_a = mean(a);
  c.mean_b = mean(b);
  const double va = sample_variance(a);
  const double vb = sample_variance(b);
  if (va == 0.0 && vb == 0.0)
    throw ConfigError(FieldError{"series", "both samples have zero variance"});

  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = va / na;
  const double sb = vb / nb;
  c.t = (c.mean_a - c.mean_b) / std::sqrt(sa + sb);
  c.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  const boost::math::students_t dist(c.df);
  c.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(c.t)));

  const double pooled = std::sqrt(((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0));
  c.cohens_d = (c.mean_a - c.mean_b) / pooled;
  return c;
}

}  // namespace hmt
