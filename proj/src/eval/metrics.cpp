#include "vln/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vln::eval {

MetricsSummary summarize(const std::vector<EpisodeResult>& results) {
  MetricsSummary s;
  s.episodes = static_cast<int>(results.size());
  if (results.empty()) return s;
  for (const auto& r : results) {
    if (r.success && !r.oracle_success)
      throw VlnError("summarize: success without oracle success");
    s.sr += r.success ? 1.0 : 0.0;
    s.osr += r.oracle_success ? 1.0 : 0.0;
    s.spl += r.spl();
    s.dts += r.final_distance;
  }
  const real inv = 1.0 / s.episodes;
  s.sr *= 100.0 * inv;
  s.osr *= 100.0 * inv;
  s.spl *= 100.0 * inv;
  s.dts *= inv;
  return s;
}

namespace {
std::vector<real> ranks(const std::vector<real>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return x[a] < x[b]; });
  std::vector<real> r(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    const real avg = (i + j) / 2.0 + 1.0;
    for (int k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}
}  // namespace

real spearman(const std::vector<real>& a, const std::vector<real>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw VlnError("spearman: need two sequences of equal length >= 2");
  const std::vector<real> ra = ranks(a);
  const std::vector<real> rb = ranks(b);
  const int n = static_cast<int>(a.size());
  real ma = 0, mb = 0;
  for (int i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  real cov = 0, va = 0, vb = 0;
  for (int i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace vln::eval
