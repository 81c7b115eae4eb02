#pragma once

namespace difr::stats {

/// Standard normal CDF.
double normal_cdf(double z);

/// log of the standard normal CDF, accurate far into the lower tail
/// (asymptotic expansion below z = -30, where erfc would underflow).
double log_normal_cdf(double z);

}  // namespace difr::stats
