#pragma once

#include "trialcea/contrasts.hpp"
#include "trialcea/dataset.hpp"
#include "trialcea/errors.hpp"
#include "trialcea/mmrm.hpp"
#include "trialcea/parallel.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace trialcea {

struct CeaDraw {
    std::size_t replicate = 0;  // 1-based
    double dE = 0.0, dC = 0.0;
    double qaly0 = 0.0, qaly1 = 0.0;
    double tc0 = 0.0, tc1 = 0.0;
};

struct CeaPoint {
    double dE = 0.0, dC = 0.0;
    double qaly0 = 0.0, qaly1 = 0.0;
    double tc0 = 0.0, tc1 = 0.0;
};

struct CeaDraws {
    std::vector<CeaDraw> rows;  // converged replicates, ascending replicate index
    std::size_t n_failed = 0;
    std::vector<std::size_t> failed_replicates;
    std::uint64_t seed = 0;
    CeaPoint point_estimate;

    std::size_t n_requested() const { return rows.size() + n_failed; }
};

/// Picks n indices from [0, n). The default draws with replacement.
using Resampler = std::function<std::vector<std::size_t>(std::mt19937_64&, std::size_t)>;

std::vector<std::size_t> resample_with_replacement(std::mt19937_64& rng, std::size_t n);

struct BootstrapOptions {
    Execution execution = Execution::Parallel;
    Resampler resampler;  // empty → resample_with_replacement
    double max_failed_fraction = 0.05;
    FitOptions fit;
};

class BootstrapFailure : public ConvergenceError {
public:
    BootstrapFailure(const std::string& what, CeaDraws partial)
        : ConvergenceError(what), partial_(std::move(partial)) {}
    const CeaDraws& partial() const noexcept { return partial_; }

private:
    CeaDraws partial_;
};

/// (ΔE, ΔC) and per-arm totals from one pair of fits.
CeaPoint cea_point(const FittedMmrm& fit_u, const FittedMmrm& fit_c, const QalyWeights& w);

/// Replicate b of a stratified (by arm) case resample. Subjects are taken in
/// id order within arm, so the draw does not depend on input row order;
/// replicate subjects get fresh unique ids.
TrialDataset bootstrap_sample(const TrialDataset& data, std::uint64_t seed, std::size_t b,
                              const Resampler& resampler = {});

CeaDraws bootstrap_cea(const TrialDataset& data, const MmrmSpec& spec_u, const MmrmSpec& spec_c, const QalyWeights& w,
                       std::size_t B, std::uint64_t seed, const BootstrapOptions& options = {});

enum class Quadrant { NE, SE, NW, SW };
const char* quadrant_name(Quadrant q);

struct Icer {
    std::optional<double> value;  // empty when ΔE = 0
    Quadrant quadrant = Quadrant::NE;
    /// False outside NE/SW, where the ratio does not rank options.
    bool interpretable = true;
};

Icer icer(double dE, double dC);

struct CeacPoint {
    double k = 0.0;
    double probability = 0.0;
};

std::vector<CeacPoint> ceac(const std::vector<CeaDraw>& draws, const std::vector<double>& k_grid);

/// lo:hi:step, inclusive of hi when it lands on the grid.
std::vector<double> k_grid(double lo, double hi, double step);
std::vector<double> default_k_grid();
inline constexpr double kDefaultHighlight = 25000.0;
inline constexpr std::size_t kDefaultBootstrap = 10000;

/// Nearest-rank percentile: the ceil(p·n)-th smallest value (p = 0 → minimum).
double nearest_rank(std::vector<double> values, double p);

struct Interval {
    double lower = 0.0, upper = 0.0;
};

struct CeaSummary {
    CeaPoint point;
    Icer point_icer;
    std::vector<CeacPoint> curve;
    double k_highlight = kDefaultHighlight;
    double p_cost_effective = 0.0;  // CEAC at k_highlight
    double p_effective = 0.0;       // fraction with ΔE > 0
    double p_cost_saving = 0.0;     // fraction with ΔC < 0
    Interval ci_dE, ci_dC;
    double level = 0.95;
    std::size_t n_draws = 0, n_failed = 0;
};

CeaSummary summarize(const CeaDraws& draws, const std::vector<double>& k_grid, double k_highlight = kDefaultHighlight,
                     double level = 0.95);

nlohmann::json to_json(const CeaSummary& s);
std::string draws_delimited(const CeaDraws& draws, char delimiter = ',');

struct CeaPlots {
    std::string cep_svg;
    std::string ceac_svg;
};

CeaPlots render_plots(const CeaDraws& draws, const CeaSummary& summary, double k_highlight);

/// Marginal means by arm and visit for both outcomes, QALYs, total costs,
/// incremental results, ICER and probability of cost-effectiveness.
std::string cea_report(const FittedMmrm& fit_u, const FittedMmrm& fit_c, const QalyWeights& w,
                       const CeaSummary& summary, double level = 0.95, char delimiter = '\t');

}  // namespace trialcea
