#pragma once

namespace robest {

// digamma / trigamma by upward recurrence into the asymptotic regime,
// absolute error below 1e-12 on (0, inf)
double digamma(double x);
double trigamma(double x);

// standard normal distribution
double norm_cdf(double z);
double norm_pdf(double z);
double norm_quantile(double p);

// regularized incomplete gamma functions P(a,x) (lower) and Q(a,x) (upper)
double gamma_p(double a, double x);
double gamma_q(double a, double x);

}  // namespace robest
