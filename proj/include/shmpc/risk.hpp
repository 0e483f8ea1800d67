#pragma once
// Risk allocation for nonconvex scenario programs with bounded support.
//
// Given S samples, confidence level beta and a support limit nbar, each
// support cardinality n <= nbar is assigned the violation level
//
//   eps(n) = 1 - ( beta / (S * C(S,n)) )^(1/(S-n)),   eps(S) = 1,
//
// so that sum_{n=0}^{S-1} C(S,n) (1-eps(n))^(S-n) = (nbar+1) beta / S <= beta.
// A solution whose estimated support n_hat stays within nbar is then certified
// at violation level eps(n_hat) with confidence 1 - beta.
//
// Everything is evaluated in log space; C(1237, 9) alone is ~e^51.

#include <stdexcept>
#include <vector>

namespace shmpc {

struct RiskConfig {
  double epsilon = 0.05;   // target violation level, in (0,1)
  double beta = 0.01;      // confidence parameter, in (0,1)
  int support_limit = 9;   // nbar, total allowed support (includes removal)
  int removal_budget = 0;  // R, scenarios the solver may discard; R <= nbar

  void validate() const;
};

struct RiskCertificate {
  int sample_size = 0;
  int support_estimate = 0;
  double epsilon_bound = 1.0;  // eps(n_hat) if certified, else 1
  double beta = 0.0;
  bool certified = false;
};

// log C(S, n) via lgamma.
double log_binomial(int sample_size, int n);

// eps(n) as above. Requires 0 <= n <= sample_size, sample_size >= 1,
// beta in (0,1). Returns 1 for n == sample_size.
double epsilon_of_n(int n, int sample_size, double beta);

// Minimal S with epsilon_of_n(support_limit, S, beta) <= epsilon.
// Exponential bracketing + binary search + linear minimality check.
// Throws std::runtime_error if no S <= cap satisfies the bound.
int compute_sample_size(double epsilon, double beta, int support_limit,
                        int cap = 10'000'000);

// eps(n) for n = 0..support_limit at fixed S.
std::vector<double> epsilon_table(int sample_size, double beta,
                                  int support_limit);

// Certificate for an observed support estimate.
RiskCertificate certify(int support_estimate, int sample_size,
                        const RiskConfig& cfg);

}  // namespace shmpc
