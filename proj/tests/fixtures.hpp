#pragma once

#include "dtanma/dataset.hpp"
#include "dtanma/model.hpp"
#include "dtanma/rng.hpp"

#include <sstream>
#include <string>
#include <vector>

namespace fixtures {

using namespace dtanma;

inline ThresholdSeries series(std::string study, std::string test, DiseaseGroup g, long n,
                              std::vector<double> thresholds, std::vector<long> positives) {
  ThresholdSeries s;
  s.study_id = std::move(study);
  s.test_id = std::move(test);
  s.group = g;
  s.group_size = n;
  s.thresholds = std::move(thresholds);
  s.positives = std::move(positives);
  return s;
}

inline Dataset parse_csv(const std::string& text) {
  std::istringstream is(text);
  return parse_dataset(is);
}

// One study, one binary test, both groups.
inline Dataset minimal_binary() {
  return parse_csv(
      "study_id,test_id,test_kind,group,threshold,positives,group_size\n"
      "s1,t1,binary,diseased,NA,14,20\n"
      "s1,t1,binary,nondiseased,NA,4,20\n");
}

// Connected all-binary network: K tests, anchored on t1, >= 2 studies per
// test. Counts are deterministic functions of the indexes.
inline Dataset binary_network(int n_studies = 12, int n_tests = 3) {
  std::ostringstream os;
  os << "study_id,test_id,test_kind,group,threshold,positives,group_size\n";
  for (int i = 0; i < n_studies; ++i) {
    const std::string study = "s" + std::to_string(i + 1);
    for (int k = 0; k < n_tests; ++k) {
      if (k != 0 && (i + k) % 3 == 0) continue;  // vary the per-study test sets
      const std::string test = "t" + std::to_string(k + 1);
      const long n_dis = 40 + 7 * ((i + k) % 5);
      const long n_non = 55 + 9 * ((i + 2 * k) % 4);
      const long x_dis = 22 + ((3 * i + 5 * k) % 14);
      const long x_non = 3 + ((2 * i + 3 * k) % 9);
      os << study << ',' << test << ",binary,diseased,NA," << x_dis << ',' << n_dis << '\n';
      os << study << ',' << test << ",binary,nondiseased,NA," << x_non << ',' << n_non << '\n';
    }
  }
  return parse_csv(os.str());
}

// Mixed network: one multi-threshold continuous test plus two binary tests,
// connected through shared studies.
inline Dataset mixed_network(int n_studies = 8) {
  std::ostringstream os;
  os << "cstar:c1=20\n";
  os << "study_id,test_id,test_kind,group,threshold,positives,group_size\n";
  for (int i = 0; i < n_studies; ++i) {
    const std::string study = "s" + std::to_string(i + 1);
    // continuous test with 3 thresholds in every study
    const long nd = 60 + 5 * (i % 4), nn = 80 + 7 * (i % 3);
    const long d0 = 45 + (i % 6), d1 = d0 - 8 - (i % 4), d2 = d1 - 9 - (i % 3);
    const long h0 = 25 + (i % 5), h1 = h0 - 10 - (i % 4), h2 = h1 - 7 - (i % 3);
    os << study << ",c1,continuous,diseased,10," << d0 << ',' << nd << '\n';
    os << study << ",c1,continuous,diseased,20," << d1 << ',' << nd << '\n';
    os << study << ",c1,continuous,diseased,42.5," << d2 << ',' << nd << '\n';
    os << study << ",c1,continuous,nondiseased,10," << h0 << ',' << nn << '\n';
    os << study << ",c1,continuous,nondiseased,20," << h1 << ',' << nn << '\n';
    os << study << ",c1,continuous,nondiseased,42.5," << h2 << ',' << nn << '\n';
    // two binary tests alternate across studies
    const std::string btest = i % 2 == 0 ? "b1" : "b2";
    const long xd = 30 + (i % 7), xn = 5 + (i % 5);
    os << study << ',' << btest << ",binary,diseased,NA," << xd << ",50\n";
    os << study << ',' << btest << ",binary,nondiseased,NA," << xn << ",60\n";
  }
  return parse_csv(os.str());
}

// Random decreasing probability vector in (lo, hi).
inline std::vector<double> decreasing_probs(Rng& rng, int len, double lo = 0.02,
                                            double hi = 0.98) {
  std::vector<double> p(len);
  for (auto& v : p) v = rng.uniform(lo, hi);
  std::sort(p.begin(), p.end(), std::greater<>());
  for (int i = 1; i < len; ++i)
    if (p[i] >= p[i - 1]) p[i] = p[i - 1] * 0.999;
  return p;
}

// Random valid counts for a series under the chain scheme.
inline std::vector<long> chain_counts(Rng& rng, long n, const std::vector<double>& probs) {
  std::vector<long> x;
  long prev = rng.binomial(n, probs[0]);
  x.push_back(prev);
  for (std::size_t t = 1; t < probs.size(); ++t) {
    prev = rng.binomial(prev, std::min(1.0, probs[t] / probs[t - 1]));
    x.push_back(prev);
  }
  return x;
}

}  // namespace fixtures
