#pragma once

namespace trialcea {

/// Standard normal quantile.
double normal_quantile(double p);

/// z such that a central interval of the given coverage is estimate ± z·SE.
/// Throws InputError unless 0 < level < 1.
double two_sided_z(double level);

}  // namespace trialcea
