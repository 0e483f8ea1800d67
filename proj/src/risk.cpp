#include "shmpc/risk.hpp"

#include <cmath>
#include <string>

namespace shmpc {

void RiskConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("risk: epsilon must be in (0,1)");
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("risk: beta must be in (0,1)");
  if (support_limit < 0)
    throw std::invalid_argument("risk: support_limit must be >= 0");
  if (removal_budget < 0 || removal_budget > support_limit)
    throw std::invalid_argument("risk: need 0 <= removal_budget <= support_limit");
}

double log_binomial(int sample_size, int n) {
  if (n < 0 || n > sample_size)
    throw std::invalid_argument("log_binomial: need 0 <= n <= S");
  return std::lgamma(double(sample_size) + 1.0) - std::lgamma(double(n) + 1.0) -
         std::lgamma(double(sample_size - n) + 1.0);
}

double epsilon_of_n(int n, int sample_size, double beta) {
  if (sample_size < 1)
    throw std::invalid_argument("epsilon_of_n: need sample_size >= 1");
  if (n < 0 || n > sample_size)
    throw std::invalid_argument("epsilon_of_n: need 0 <= n <= sample_size");
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("epsilon_of_n: beta must be in (0,1)");
  if (n == sample_size) return 1.0;
  // eps = 1 - exp(L), L = (log beta - log S - log C(S,n)) / (S - n).
  // -expm1 keeps full precision when exp(L) is close to 1.
  const double L = (std::log(beta) - std::log(double(sample_size)) -
                    log_binomial(sample_size, n)) /
                   double(sample_size - n);
  return -std::expm1(L);
}

int compute_sample_size(double epsilon, double beta, int support_limit, int cap) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw std::invalid_argument("compute_sample_size: epsilon must be in (0,1)");
  if (!(beta > 0.0 && beta < 1.0))
    throw std::invalid_argument("compute_sample_size: beta must be in (0,1)");
  if (support_limit < 0)
    throw std::invalid_argument("compute_sample_size: support_limit must be >= 0");

  const auto ok = [&](int S) {
    return epsilon_of_n(support_limit, S, beta) <= epsilon;
  };

  // Exponential bracketing from the smallest admissible S.
  int lo = support_limit;  // eps(nbar, nbar) = 1 > epsilon, always fails
  int hi = support_limit + 1;
  while (!ok(hi)) {
    lo = hi;
    if (hi >= cap)
      throw std::runtime_error("compute_sample_size: no S <= " +
                               std::to_string(cap) + " satisfies the bound");
    hi = (hi > cap / 2) ? cap : 2 * hi;
  }
  // Binary search on (lo, hi]: lo fails, hi passes.
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    (ok(mid) ? hi : lo) = mid;
  }
  // eps(nbar, S) is not a priori monotone in S; verify minimality linearly.
  while (hi - 1 > support_limit && ok(hi - 1)) --hi;
  return hi;
}

std::vector<double> epsilon_table(int sample_size, double beta,
                                  int support_limit) {
  if (support_limit >= sample_size)
    throw std::invalid_argument("epsilon_table: need support_limit < sample_size");
  std::vector<double> table(size_t(support_limit) + 1);
  for (int n = 0; n <= support_limit; ++n)
    table[size_t(n)] = epsilon_of_n(n, sample_size, beta);
  return table;
}

RiskCertificate certify(int support_estimate, int sample_size,
                        const RiskConfig& cfg) {
  cfg.validate();
  if (support_estimate < 0)
    throw std::invalid_argument("certify: support_estimate must be >= 0");
  RiskCertificate cert;
  cert.sample_size = sample_size;
  cert.support_estimate = support_estimate;
  cert.beta = cfg.beta;
  cert.certified =
      support_estimate <= cfg.support_limit && support_estimate < sample_size;
  cert.epsilon_bound =
      cert.certified ? epsilon_of_n(support_estimate, sample_size, cfg.beta) : 1.0;
  return cert;
}

}  // namespace shmpc
