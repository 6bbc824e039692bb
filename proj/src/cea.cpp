#include "trialcea/cea.hpp"

#include "trialcea/stats.hpp"
#include "trialcea/textio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace trialcea {

std::vector<std::size_t> resample_with_replacement(std::mt19937_64& rng, std::size_t n) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = pick(rng);
    return idx;
}

CeaPoint cea_point(const FittedMmrm& fit_u, const FittedMmrm& fit_c, const QalyWeights& w) {
    const auto q = qaly_by_arm(fit_u, w);
    const auto c = totalcost_by_arm(fit_c);
    return {q.incremental.estimate, c.incremental.estimate, q.control.estimate, q.intervention.estimate,
            c.control.estimate, c.intervention.estimate};
}

namespace {

std::array<std::vector<const SubjectRecord*>, 2> arms_in_id_order(const TrialDataset& data) {
    std::array<std::vector<const SubjectRecord*>, 2> arms;
    for (const auto& s : data.subjects) arms[static_cast<std::size_t>(s.arm)].push_back(&s);
    for (auto& a : arms)
        std::sort(a.begin(), a.end(), [](const auto* x, const auto* y) { return x->id < y->id; });
    return arms;
}

TrialDataset resample(const TrialDataset& data, const std::array<std::vector<const SubjectRecord*>, 2>& arms,
                      std::uint64_t seed, std::size_t b, const Resampler& resampler) {
    auto rng = keyed_rng(seed, b);
    TrialDataset out;
    out.visit_times = data.visit_times;
    out.arm_labels = data.arm_labels;
    out.subjects.reserve(data.subjects.size());
    char id[32];
    for (std::size_t a = 0; a < 2; ++a) {
        const std::size_t n = arms[a].size();
        if (n == 0) continue;
        const auto idx = resampler ? resampler(rng, n) : resample_with_replacement(rng, n);
        if (idx.size() != n) throw std::logic_error("resampler returned the wrong number of indices");
        for (std::size_t i = 0; i < n; ++i) {
            if (idx[i] >= n) throw std::logic_error("resampler index out of range");
            SubjectRecord s = *arms[a][idx[i]];
            std::snprintf(id, sizeof id, "r%zu-%07zu", a, i);
            s.id = id;
            out.subjects.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace

TrialDataset bootstrap_sample(const TrialDataset& data, std::uint64_t seed, std::size_t b, const Resampler& resampler) {
    return resample(data, arms_in_id_order(data), seed, b, resampler);
}

CeaDraws bootstrap_cea(const TrialDataset& data, const MmrmSpec& spec_u, const MmrmSpec& spec_c, const QalyWeights& w,
                       std::size_t B, std::uint64_t seed, const BootstrapOptions& options) {
    if (B < 1) throw InputError("bootstrap needs at least one replicate");
    if (spec_u.outcome != Outcome::Utility || spec_c.outcome != Outcome::Cost)
        throw InputError("bootstrap_cea expects a utility spec and a cost spec");
    validate(data);

    CeaDraws draws;
    draws.seed = seed;
    // full-data failures propagate
    draws.point_estimate = cea_point(fit(data, spec_u, options.fit), fit(data, spec_c, options.fit), w);

    const auto arms = arms_in_id_order(data);
    std::vector<std::optional<CeaPoint>> slots(B);
    for_each_index(options.execution, B, [&](std::size_t i) {
        const auto sample = resample(data, arms, seed, i + 1, options.resampler);
        try {
            slots[i] = cea_point(fit(sample, spec_u, options.fit), fit(sample, spec_c, options.fit), w);
        } catch (const ConvergenceError&) {
        } catch (const InputError&) {
            // a resample can leave a visit-by-arm cell empty
        }
    });

    for (std::size_t i = 0; i < B; ++i) {
        if (!slots[i]) {
            ++draws.n_failed;
            draws.failed_replicates.push_back(i + 1);
            continue;
        }
        const auto& p = *slots[i];
        draws.rows.push_back({i + 1, p.dE, p.dC, p.qaly0, p.qaly1, p.tc0, p.tc1});
    }
    if (static_cast<double>(draws.n_failed) > options.max_failed_fraction * static_cast<double>(B)) {
        std::ostringstream msg;
        msg << draws.n_failed << " of " << B << " bootstrap replicates failed to fit (limit "
            << options.max_failed_fraction * 100 << "%); first failed replicate " << draws.failed_replicates.front();
        throw BootstrapFailure(msg.str(), std::move(draws));
    }
    return draws;
}

const char* quadrant_name(Quadrant q) {
    switch (q) {
        case Quadrant::NE: return "NE";
        case Quadrant::SE: return "SE";
        case Quadrant::NW: return "NW";
        case Quadrant::SW: return "SW";
    }
    return "?";
}

Icer icer(double dE, double dC) {
    Icer r;
    if (dE != 0.0) r.value = dC / dE;
    // zero differences count as "not more": (0.1, 0) is dominant, (0, 0) is SW
    if (dE > 0)
        r.quadrant = dC > 0 ? Quadrant::NE : Quadrant::SE;
    else
        r.quadrant = dC > 0 ? Quadrant::NW : Quadrant::SW;
    r.interpretable = (r.quadrant == Quadrant::NE || r.quadrant == Quadrant::SW) && r.value.has_value();
    return r;
}

std::vector<CeacPoint> ceac(const std::vector<CeaDraw>& draws, const std::vector<double>& grid) {
    if (draws.empty()) throw InputError("CEAC needs at least one bootstrap draw");
    std::vector<CeacPoint> out;
    out.reserve(grid.size());
    const double n = static_cast<double>(draws.size());
    for (double k : grid) {
        if (!(k >= 0.0)) throw InputError("CEAC thresholds must be non-negative");
        std::size_t hits = 0;
        for (const auto& d : draws) hits += (k * d.dE - d.dC > 0.0);
        out.push_back({k, static_cast<double>(hits) / n});
    }
    return out;
}

std::vector<double> k_grid(double lo, double hi, double step) {
    if (!(lo >= 0.0) || !(hi >= lo) || !(step > 0.0)) throw InputError("k grid needs 0 <= lo <= hi and step > 0");
    std::vector<double> g;
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step * (1 + 1e-12)));
    for (std::size_t i = 0; i <= n; ++i) g.push_back(lo + static_cast<double>(i) * step);
    return g;
}

std::vector<double> default_k_grid() { return k_grid(0.0, 50000.0, 500.0); }

double nearest_rank(std::vector<double> values, double p) {
    if (values.empty()) throw InputError("percentile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("percentile must lie in [0, 1]");
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1), values.end());
    return values[rank - 1];
}

CeaSummary summarize(const CeaDraws& draws, const std::vector<double>& grid, double k_highlight, double level) {
    if (draws.rows.empty()) throw InputError("no converged bootstrap draws to summarize");
    two_sided_z(level);  // validates level
    CeaSummary s;
    s.point = draws.point_estimate;
    s.point_icer = icer(s.point.dE, s.point.dC);
    s.curve = ceac(draws.rows, grid);
    s.k_highlight = k_highlight;
    s.p_cost_effective = ceac(draws.rows, {k_highlight}).front().probability;
    s.level = level;
    s.n_draws = draws.rows.size();
    s.n_failed = draws.n_failed;
    std::vector<double> e, c;
    std::size_t eff = 0, saving = 0;
    for (const auto& d : draws.rows) {
        e.push_back(d.dE);
        c.push_back(d.dC);
        eff += d.dE > 0;
        saving += d.dC < 0;
    }
    const double n = static_cast<double>(s.n_draws);
    s.p_effective = static_cast<double>(eff) / n;
    s.p_cost_saving = static_cast<double>(saving) / n;
    const double a = (1.0 - level) / 2.0;
    s.ci_dE = {nearest_rank(e, a), nearest_rank(e, 1.0 - a)};
    s.ci_dC = {nearest_rank(c, a), nearest_rank(c, 1.0 - a)};
    return s;
}

nlohmann::json to_json(const CeaSummary& s) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : s.curve) curve.push_back({{"k", p.k}, {"probability", p.probability}});
    nlohmann::json icer_j = {{"quadrant", quadrant_name(s.point_icer.quadrant)},
                             {"interpretable", s.point_icer.interpretable}};
    icer_j["value"] = s.point_icer.value ? nlohmann::json(*s.point_icer.value) : nlohmann::json(nullptr);
    return {{"point_estimate",
             {{"dE", s.point.dE},
              {"dC", s.point.dC},
              {"qaly0", s.point.qaly0},
              {"qaly1", s.point.qaly1},
              {"tc0", s.point.tc0},
              {"tc1", s.point.tc1}}},
            {"icer", icer_j},
            {"k_highlight", s.k_highlight},
            {"p_cost_effective", s.p_cost_effective},
            {"p_effective", s.p_effective},
            {"p_cost_saving", s.p_cost_saving},
            {"level", s.level},
            {"ci_dE", {s.ci_dE.lower, s.ci_dE.upper}},
            {"ci_dC", {s.ci_dC.lower, s.ci_dC.upper}},
            {"n_draws", s.n_draws},
            {"n_failed", s.n_failed},
            {"ceac", curve}};
}

std::string draws_delimited(const CeaDraws& draws, char d) {
    std::string out = "replicate";
    for (const char* h : {"dE", "dC", "qaly0", "qaly1", "tc0", "tc1"}) (out += d) += h;
    out += '\n';
    for (const auto& r : draws.rows) {
        out += std::to_string(r.replicate);
        for (double v : {r.dE, r.dC, r.qaly0, r.qaly1, r.tc0, r.tc1}) (out += d) += format_double(v);
        out += '\n';
    }
    return out;
}

// ---- plots

namespace {

constexpr double kW = 640, kH = 480, kLeft = 80, kRight = 20, kTop = 30, kBottom = 60;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    if (v == 0.0) return "0";
    if (std::abs(v) >= 100 || std::abs(v) < 1e-3)
        std::snprintf(buf, sizeof buf, "%.4g", v);
    else
        std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

struct Range {
    double lo, hi;
};

Range padded(double lo, double hi) {
    if (hi - lo <= 0.0) {
        const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
        return {lo - pad, hi + pad};
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

std::vector<double> ticks(Range r, int target = 5) {
    const double raw = (r.hi - r.lo) / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    std::vector<double> t;
    for (double v = std::ceil(r.lo / step) * step; v <= r.hi + 1e-9 * step; v += step)
        t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
    return t;
}

struct Frame {
    Range x, y;
    double px(double v) const { return kLeft + (v - x.lo) / (x.hi - x.lo) * (kW - kLeft - kRight); }
    double py(double v) const { return kH - kBottom - (v - y.lo) / (y.hi - y.lo) * (kH - kTop - kBottom); }
};

void open_svg(std::ostringstream& o, const std::string& title) {
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 "
      << kW << ' ' << kH << "\">\n"
      << "<title>" << title << "</title>\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<defs><clipPath id=\"plot\"><rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kW - kLeft - kRight
      << "\" height=\"" << kH - kTop - kBottom << "\"/></clipPath></defs>\n";
}

void axes(std::ostringstream& o, const Frame& f, const std::string& xlab, const std::string& ylab) {
    o << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
    o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kW - kLeft - kRight << "\" height=\""
      << kH - kTop - kBottom << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (double t : ticks(f.x)) {
        o << "<line x1=\"" << num(f.px(t)) << "\" y1=\"" << kH - kBottom << "\" x2=\"" << num(f.px(t)) << "\" y2=\""
          << kH - kBottom + 5 << "\" stroke=\"black\"/>"
          << "<text x=\"" << num(f.px(t)) << "\" y=\"" << kH - kBottom + 18 << "\" text-anchor=\"middle\">"
          << tick_label(t) << "</text>\n";
    }
    for (double t : ticks(f.y)) {
        o << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << num(f.py(t)) << "\" x2=\"" << kLeft << "\" y2=\""
          << num(f.py(t)) << "\" stroke=\"black\"/>"
          << "<text x=\"" << kLeft - 8 << "\" y=\"" << num(f.py(t) + 4) << "\" text-anchor=\"end\">" << tick_label(t)
          << "</text>\n";
    }
    o << "<text x=\"" << (kLeft + kW - kRight) / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">" << xlab
      << "</text>\n";
    o << "<text transform=\"translate(18," << (kTop + kH - kBottom) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << ylab << "</text>\n</g>\n";
}

}  // namespace

CeaPlots render_plots(const CeaDraws& draws, const CeaSummary& summary, double k) {
    if (draws.rows.empty()) throw InputError("nothing to plot: no bootstrap draws");
    CeaPlots plots;
    {
        double xlo = 0, xhi = 0, ylo = 0, yhi = 0;  // origin always in view
        auto extend = [&](double x, double y) {
            xlo = std::min(xlo, x);
            xhi = std::max(xhi, x);
            ylo = std::min(ylo, y);
            yhi = std::max(yhi, y);
        };
        for (const auto& d : draws.rows) extend(d.dE, d.dC);
        extend(summary.point.dE, summary.point.dC);
        Frame f{padded(xlo, xhi), padded(ylo, yhi)};
        std::ostringstream o;
        open_svg(o, "Cost-effectiveness plane");
        o << "<g clip-path=\"url(#plot)\">\n";
        o << "<line class=\"axis-x0\" x1=\"" << kLeft << "\" y1=\"" << num(f.py(0)) << "\" x2=\"" << kW - kRight
          << "\" y2=\"" << num(f.py(0)) << "\" stroke=\"grey\"/>\n";
        o << "<line class=\"axis-y0\" x1=\"" << num(f.px(0)) << "\" y1=\"" << kTop << "\" x2=\"" << num(f.px(0))
          << "\" y2=\"" << kH - kBottom << "\" stroke=\"grey\"/>\n";
        o << "<line class=\"threshold\" x1=\"" << num(f.px(f.x.lo)) << "\" y1=\"" << num(f.py(k * f.x.lo)) << "\" x2=\""
          << num(f.px(f.x.hi)) << "\" y2=\"" << num(f.py(k * f.x.hi))
          << "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
        o << "<g class=\"draws\" fill=\"steelblue\" fill-opacity=\"0.35\">\n";
        for (const auto& d : draws.rows)
            o << "<circle cx=\"" << num(f.px(d.dE)) << "\" cy=\"" << num(f.py(d.dC)) << "\" r=\"1.8\"/>\n";
        o << "</g>\n";
        o << "<circle class=\"point-estimate\" cx=\"" << num(f.px(summary.point.dE)) << "\" cy=\""
          << num(f.py(summary.point.dC)) << "\" r=\"5\" fill=\"darkred\" stroke=\"black\"/>\n";
        o << "</g>\n";
        axes(o, f, "Incremental QALYs", "Incremental cost");
        o << "<text x=\"" << kW - kRight - 5 << "\" y=\"" << kTop + 15
          << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">k = " << tick_label(k)
          << "</text>\n</svg>\n";
        plots.cep_svg = o.str();
    }
    {
        const auto& c = summary.curve;
        const double kmax = c.empty() ? 1.0 : c.back().k;
        Frame f{padded(c.empty() ? 0.0 : c.front().k, kmax), {0.0, 1.0}};
        std::ostringstream o;
        open_svg(o, "Cost-effectiveness acceptability curve");
        o << "<g clip-path=\"url(#plot)\">\n";
        if (!c.empty()) {
            // the estimate holds from each grid point to the next
            o << "<path class=\"ceac\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" d=\"M"
              << num(f.px(c[0].k)) << ',' << num(f.py(c[0].probability));
            for (std::size_t i = 1; i < c.size(); ++i)
                o << " H" << num(f.px(c[i].k)) << " V" << num(f.py(c[i].probability));
            o << "\"/>\n";
        }
        o << "<line class=\"highlight\" x1=\"" << num(f.px(k)) << "\" y1=\"" << kTop << "\" x2=\"" << num(f.px(k))
          << "\" y2=\"" << kH - kBottom << "\" stroke=\"grey\" stroke-dasharray=\"4,4\"/>\n";
        o << "</g>\n";
        axes(o, f, "Willingness to pay per QALY (k)", "Probability cost-effective");
        o << "</svg>\n";
        plots.ceac_svg = o.str();
    }
    return plots;
}

// ---- report

namespace {

std::string fixed(double v, int digits) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    std::string s = buf;
    if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);  // no "-0.000"
    return s;
}

ContrastWeights minus(ContrastWeights a, const ContrastWeights& b) {
    for (const auto& [k, v] : b) a[k] -= v;
    return a;
}

}  // namespace

std::string cea_report(const FittedMmrm& fit_u, const FittedMmrm& fit_c, const QalyWeights& w,
                       const CeaSummary& summary, double level, char d) {
    std::string out;
    auto row = [&](const std::string& name, const ContrastResult& c0, const ContrastResult& c1,
                   const ContrastResult& inc, int digits) {
        out += name;
        for (const auto* r : {&c0, &c1, &inc}) {
            out += d;
            out += fixed(r->estimate, digits);
            out += d;
            out += "(" + fixed(r->lower, digits) + "; " + fixed(r->upper, digits) + ")";
        }
        out += '\n';
    };
    const std::string ci = fixed(level * 100, 0) + "% CI";
    out += std::string("quantity") + d + "control" + d + ci + d + "intervention" + d + ci + d + "incremental" + d +
           ci + '\n';
    for (const auto* f : {&fit_u, &fit_c}) {
        const bool util = f->spec.outcome == Outcome::Utility;
        for (std::size_t j = 1; j < f->n_visits; ++j) {
            const auto w0 = marginal_mean_weights(*f, 0, j), w1 = marginal_mean_weights(*f, 1, j);
            row((util ? "U_" : "C_") + std::to_string(j + 1), linear_contrast(*f, w0, level),
                linear_contrast(*f, w1, level), linear_contrast(*f, minus(w1, w0), level), util ? 3 : 0);
        }
        if (util) {
            const auto q = qaly_by_arm(*f, w, level);
            row("QALYs", q.control, q.intervention, q.incremental, 3);
        } else {
            const auto c = totalcost_by_arm(*f, level);
            row("Total costs", c.control, c.intervention, c.incremental, 0);
        }
    }
    out += std::string("ICER") + d + d + d + d + d;
    out += summary.point_icer.value ? fixed(*summary.point_icer.value, 0) : std::string("undefined");
    out += d;
    out += quadrant_name(summary.point_icer.quadrant);
    out += '\n';
    out += "Probability of cost-effectiveness (k=" + fixed(summary.k_highlight, 0) + ")" + d + d + d + d + d +
           fixed(summary.p_cost_effective * 100, 0) + "%\n";
    return out;
}

}  // namespace trialcea
