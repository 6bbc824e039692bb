#include "trialcea/dataset.hpp"

#include "trialcea/errors.hpp"
#include "trialcea/textio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace trialcea {

const char* outcome_name(Outcome o) { return o == Outcome::Utility ? "utility" : "cost"; }

bool SubjectRecord::complete() const {
    auto obs = [](const OptValue& v) { return v.has_value(); };
    return std::all_of(utility.begin(), utility.end(), obs) && std::all_of(cost.begin(), cost.end(), obs);
}

bool SubjectRecord::any_observed() const {
    auto obs = [](const OptValue& v) { return v.has_value(); };
    return std::any_of(utility.begin(), utility.end(), obs) || std::any_of(cost.begin(), cost.end(), obs);
}

std::size_t TrialDataset::arm_size(int arm) const {
    return static_cast<std::size_t>(
        std::count_if(subjects.begin(), subjects.end(), [arm](const SubjectRecord& s) { return s.arm == arm; }));
}

void validate(const TrialDataset& data) {
    const auto& t = data.visit_times;
    if (t.empty() && data.subjects.empty()) return;
    if (t.empty()) throw InputError("visit schedule is empty");
    if (t.front() != 0.0) throw InputError("visit schedule must start at 0");
    for (std::size_t j = 1; j < t.size(); ++j)
        if (!(t[j] > t[j - 1])) throw InputError("visit schedule must be strictly increasing");

    const std::size_t J = t.size();
    std::set<std::string> ids;
    for (const auto& s : data.subjects) {
        if (!ids.insert(s.id).second) throw InputError("duplicate subject id '" + s.id + "'");
        if (s.arm != 0 && s.arm != 1)
            throw InputError("subject '" + s.id + "': arm " + std::to_string(s.arm) + " not in {0,1}");
        if (s.utility.size() != J || s.cost.size() != J)
            throw InputError("subject '" + s.id + "': expected " + std::to_string(J) + " visit slots per outcome");
        for (const auto* v : {&s.utility, &s.cost})
            for (const auto& x : *v)
                if (x && !std::isfinite(*x)) throw InputError("subject '" + s.id + "': non-finite outcome value");
    }
}

std::vector<std::string> validation_warnings(const TrialDataset& data) {
    std::vector<std::string> out;
    for (const auto& s : data.subjects) {
        if (!s.any_observed()) out.push_back("subject '" + s.id + "': no observed utility or cost values");
        for (std::size_t j = 0; j < s.utility.size(); ++j) {
            const auto& u = s.utility[j];
            if (u && (*u < -0.594 || *u > 1.0))
                out.push_back("subject '" + s.id + "': utility at visit " + std::to_string(j + 1) +
                              " outside [-0.594, 1]");
        }
        for (std::size_t j = 0; j < s.cost.size(); ++j)
            if (s.cost[j] && *s.cost[j] < 0.0)
                out.push_back("subject '" + s.id + "': negative cost at visit " + std::to_string(j + 1));
    }
    return out;
}

namespace {

struct RowRef {
    std::size_t line;
    const std::string* column;
};

std::string where(const RowRef& r) {
    return "row " + std::to_string(r.line) + ", column '" + *r.column + "'";
}

OptValue parse_value(const std::string& field, const std::string& missing, const RowRef& r) {
    if (field.empty() || field == missing) return std::nullopt;
    auto v = parse_double(field);
    if (!v || !std::isfinite(*v)) throw InputError(where(r) + ": non-numeric value '" + field + "'");
    return v;
}

long parse_int(const std::string& field, const RowRef& r) {
    long v = 0;
    const auto* end = field.data() + field.size();
    auto [p, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc{} || p != end) {
        // accept integral floats such as "1.0"
        auto d = parse_double(field);
        if (!d || std::floor(*d) != *d) throw InputError(where(r) + ": expected an integer, got '" + field + "'");
        v = static_cast<long>(*d);
    }
    return v;
}

}  // namespace

TrialDataset load_long(std::istream& in, const LongSchema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw InputError("input is empty (a header row is required)");
    strip_cr(line);
    const auto header = split_delimited(line, schema.delimiter);

    auto column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw InputError("missing required column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_id = column(schema.id), c_arm = column(schema.arm), c_time = column(schema.time),
                      c_u = column(schema.utility), c_c = column(schema.cost);
    std::vector<std::size_t> c_cov;
    for (const auto& name : schema.covariates) c_cov.push_back(column(name));

    struct Row {
        std::size_t line;
        std::string id;
        int arm;
        long time;
        OptValue u, c;
        std::vector<OptValue> cov;
    };
    std::vector<Row> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto f = split_delimited(line, schema.delimiter);
        if (f.size() != header.size())
            throw InputError("row " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                             " fields, found " + std::to_string(f.size()));
        Row r;
        r.line = lineno;
        r.id = f[c_id];
        if (r.id.empty()) throw InputError(where({lineno, &schema.id}) + ": empty subject id");
        const long arm = parse_int(f[c_arm], {lineno, &schema.arm});
        if (arm != 0 && arm != 1)
            throw InputError(where({lineno, &schema.arm}) + ": arm value '" + f[c_arm] + "' not in {0,1}");
        r.arm = static_cast<int>(arm);
        r.time = parse_int(f[c_time], {lineno, &schema.time});
        if (r.time < 1) throw InputError(where({lineno, &schema.time}) + ": time index must be >= 1");
        r.u = parse_value(f[c_u], schema.missing_token, {lineno, &schema.utility});
        r.c = parse_value(f[c_c], schema.missing_token, {lineno, &schema.cost});
        for (std::size_t k = 0; k < c_cov.size(); ++k)
            r.cov.push_back(parse_value(f[c_cov[k]], schema.missing_token, {lineno, &schema.covariates[k]}));
        rows.push_back(std::move(r));
    }

    long max_time = 0;
    for (const auto& r : rows) max_time = std::max(max_time, r.time);
    std::size_t J = schema.visit_times.empty() ? static_cast<std::size_t>(max_time) : schema.visit_times.size();
    if (!schema.visit_times.empty() && static_cast<std::size_t>(max_time) > J)
        throw InputError("time index " + std::to_string(max_time) + " exceeds the " + std::to_string(J) +
                         "-visit schedule");

    TrialDataset data;
    if (schema.visit_times.empty()) {
        for (std::size_t j = 0; j < J; ++j) data.visit_times.push_back(static_cast<double>(j));
    } else {
        data.visit_times = schema.visit_times;
    }

    std::unordered_map<std::string, std::size_t> index;
    std::set<std::pair<std::string, long>> seen;
    for (const auto& r : rows) {
        if (!seen.emplace(r.id, r.time).second)
            throw InputError("row " + std::to_string(r.line) + ": duplicate row for subject '" + r.id + "' at time " +
                             std::to_string(r.time));
        auto [it, fresh] = index.emplace(r.id, data.subjects.size());
        if (fresh) {
            SubjectRecord s;
            s.id = r.id;
            s.arm = r.arm;
            s.utility.assign(J, std::nullopt);
            s.cost.assign(J, std::nullopt);
            for (const auto& name : schema.covariates) s.covariates[name] = std::nullopt;
            data.subjects.push_back(std::move(s));
        }
        auto& s = data.subjects[it->second];
        if (s.arm != r.arm)
            throw InputError(where({r.line, &schema.arm}) + ": subject '" + r.id + "' changes arm");
        const auto j = static_cast<std::size_t>(r.time - 1);
        s.utility[j] = r.u;
        s.cost[j] = r.c;
        // baseline covariates: first observed value wins, later rows must agree
        for (std::size_t k = 0; k < schema.covariates.size(); ++k) {
            auto& slot = s.covariates[schema.covariates[k]];
            if (!r.cov[k]) continue;
            if (slot && *slot != *r.cov[k])
                throw InputError(where({r.line, &schema.covariates[k]}) + ": covariate differs within subject '" +
                                 r.id + "'");
            slot = r.cov[k];
        }
    }
    validate(data);
    return data;
}

void write_long(std::ostream& out, const TrialDataset& data, const LongSchema& schema) {
    const char d = schema.delimiter;
    out << schema.id << d << schema.arm << d << schema.time << d << schema.utility << d << schema.cost;
    for (const auto& c : schema.covariates) out << d << c;
    out << '\n';
    auto put = [&](const OptValue& v) {
        if (v) out << format_double(*v);
        else out << schema.missing_token;
    };
    for (const auto& s : data.subjects) {
        for (std::size_t j = 0; j < data.n_visits(); ++j) {
            out << s.id << d << s.arm << d << (j + 1) << d;
            put(s.utility[j]);
            out << d;
            put(s.cost[j]);
            for (const auto& c : schema.covariates) {
                out << d;
                auto it = s.covariates.find(c);
                put(it == s.covariates.end() ? std::nullopt : it->second);
            }
            out << '\n';
        }
    }
}

TrialDataset mean_impute_covariates(const TrialDataset& data, const std::vector<std::string>& names) {
    TrialDataset out = data;
    for (const auto& name : names) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& s : data.subjects) {
            auto it = s.covariates.find(name);
            if (it == s.covariates.end()) throw InputError("unknown covariate '" + name + "'");
            if (it->second) {
                sum += *it->second;
                ++n;
            }
        }
        if (n == 0) {
            if (data.subjects.empty()) continue;
            throw InputError("covariate '" + name + "' is entirely missing");
        }
        const double mean = sum / static_cast<double>(n);
        for (auto& s : out.subjects) {
            auto& v = s.covariates[name];
            if (!v) v = mean;
        }
    }
    return out;
}

std::string missingness_pattern(const SubjectRecord& s) {
    std::string p;
    for (const auto& v : s.utility) p += v ? '-' : 'X';
    for (const auto& v : s.cost) p += v ? '-' : 'X';
    return p;
}

PatternTable pattern_table(const TrialDataset& data) {
    PatternTable t;
    std::map<std::string, std::array<std::size_t, 2>> counts;
    for (const auto& s : data.subjects) {
        ++counts[missingness_pattern(s)][s.arm];
        ++t.arm_n[s.arm];
    }
    const std::size_t n = t.arm_n[0] + t.arm_n[1];
    for (const auto& [pattern, c] : counts) {
        PatternRow r;
        r.pattern = pattern;
        r.count = c;
        r.total = c[0] + c[1];
        for (int a = 0; a < 2; ++a)
            r.fraction[a] = t.arm_n[a] ? static_cast<double>(c[a]) / static_cast<double>(t.arm_n[a]) : 0.0;
        r.total_fraction = static_cast<double>(r.total) / static_cast<double>(n);
        t.rows.push_back(std::move(r));
    }
    std::stable_sort(t.rows.begin(), t.rows.end(),
                     [](const PatternRow& a, const PatternRow& b) { return a.total > b.total; });
    return t;
}

const DescriptiveCell& DescriptiveTable::at(Outcome o, int arm, std::size_t visit) const {
    for (const auto& c : cells)
        if (c.outcome == o && c.arm == arm && c.visit == visit) return c;
    throw std::out_of_range("no descriptive cell for the requested outcome/arm/visit");
}

DescriptiveTable descriptives(const TrialDataset& data) {
    DescriptiveTable t;
    for (Outcome o : {Outcome::Utility, Outcome::Cost}) {
        for (int arm = 0; arm < 2; ++arm) {
            for (std::size_t j = 0; j < data.n_visits(); ++j) {
                DescriptiveCell cell;
                cell.outcome = o;
                cell.arm = arm;
                cell.visit = j;
                double sum = 0.0;
                for (const auto& s : data.subjects) {
                    const auto& v = s.values(o)[j];
                    if (s.arm == arm && v) {
                        sum += *v;
                        ++cell.n;
                    }
                }
                if (cell.n > 0) {
                    const double mean = sum / static_cast<double>(cell.n);
                    cell.mean = mean;
                    if (cell.n > 1) {
                        double ss = 0.0;
                        for (const auto& s : data.subjects) {
                            const auto& v = s.values(o)[j];
                            if (s.arm == arm && v) ss += (*v - mean) * (*v - mean);
                        }
                        cell.sd = std::sqrt(ss / static_cast<double>(cell.n - 1));
                    }
                }
                t.cells.push_back(cell);
            }
        }
    }
    return t;
}

}  // namespace trialcea
