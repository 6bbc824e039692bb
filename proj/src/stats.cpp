#include "trialcea/stats.hpp"

#include "trialcea/errors.hpp"

#include <boost/math/distributions/normal.hpp>

namespace trialcea {

double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double two_sided_z(double level) {
    if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0, 1)");
    return normal_quantile(0.5 * (1.0 + level));
}

}  // namespace trialcea
