#include "climagent/evalharness.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "climagent/error.hpp"

namespace climagent::eval {

std::string_view to_string(Level l) {
    static constexpr std::string_view names[] = {"L1", "L2", "L3", "L4", "L5"};
    return names[int(l)];
}

Level level_from_string(std::string_view s) {
    for (auto l : {Level::L1, Level::L2, Level::L3, Level::L4, Level::L5})
        if (to_string(l) == s) return l;
    fail(Errc::unknown_level, "unknown task level '" + std::string(s) + "'");
}

json TaskSpec::to_json() const {
    return {{"task_id", task_id}, {"level", std::string(to_string(level))}, {"description", description},
            {"variable", variable}};
}

TaskSpec TaskSpec::from_json(const json& j) {
    TaskSpec t;
    try {
        t.task_id = j.at("task_id").get<std::string>();
        t.description = j.value("description", "");
        t.variable = j.value("variable", "");
        t.level = level_from_string(j.at("level").get<std::string>());
    } catch (const json::exception& e) {
        fail(Errc::parse_error, std::string("task spec: ") + e.what());
    }
    if (t.task_id.empty()) fail(Errc::parse_error, "task spec without task_id");
    return t;
}

std::vector<TaskSpec> load_suite(const fs::path& path) {
    if (!fs::exists(path)) fail(Errc::parse_error, "suite file not found: " + path.string());
    std::vector<TaskSpec> suite;
    std::set<std::string> ids;
    for (const auto& row : read_json_lines(path)) {
        auto t = TaskSpec::from_json(row);
        if (!ids.insert(t.task_id).second) fail(Errc::invariant_violation, "duplicate task id " + t.task_id);
        suite.push_back(std::move(t));
    }
    return suite;
}

std::string_view to_string(Dimension d) {
    switch (d) {
        case Dimension::planning: return "planning";
        case Dimension::coding: return "coding";
        case Dimension::synthesis: return "synthesis";
    }
    return "planning";
}

Dimension dimension_from_string(std::string_view s) {
    for (auto d : kDimensions)
        if (to_string(d) == s) return d;
    fail(Errc::invalid_argument, "unknown rubric dimension '" + std::string(s) + "'");
}

Rational::Rational(std::int64_t num, std::int64_t den) {
    if (den == 0) fail(Errc::invalid_argument, "zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    auto g = std::gcd(num < 0 ? -num : num, den);
    if (g == 0) g = 1;
    num_ = num / g;
    den_ = den / g;
}

Rational operator+(const Rational& a, const Rational& b) {
    return Rational(a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_);
}

Rational operator/(const Rational& a, std::int64_t n) { return Rational(a.num_, a.den_ * n); }

bool operator<(const Rational& a, const Rational& b) { return a.num_ * b.den_ < b.num_ * a.den_; }

std::string Rational::to_fixed(int decimals) const {
    std::int64_t scale = 1;
    for (int i = 0; i < decimals; ++i) scale *= 10;
    std::int64_t scaled = (num_ * scale * 2 + den_) / (den_ * 2);  // half up, non-negative values
    std::ostringstream os;
    os << scaled / scale;
    if (decimals > 0) {
        auto frac = std::to_string(scaled % scale);
        os << "." << std::string(std::size_t(decimals) - frac.size(), '0') << frac;
    }
    return os.str();
}

std::string_view to_string(Classification c) {
    switch (c) {
        case Classification::expert_level: return "expert_level";
        case Classification::research_ready: return "research_ready";
        case Classification::deficient: return "deficient";
        case Classification::gap: return "gap";
    }
    return "gap";
}

Classification classify(double composite) {
    if (composite > 4.0) return Classification::expert_level;
    if (composite >= 2.5) return Classification::research_ready;
    if (composite < 2.0) return Classification::deficient;
    return Classification::gap;
}

Classification classify(const Rational& composite) {
    if (composite > Rational(4)) return Classification::expert_level;
    if (composite >= Rational(5, 2)) return Classification::research_ready;
    if (composite < Rational(2)) return Classification::deficient;
    return Classification::gap;
}

json Scorecard::to_json() const {
    json m = json::object();
    json exact = json::object();
    for (const auto& [d, v] : means) {
        m[std::string(to_string(d))] = v.to_fixed(2);
        exact[std::string(to_string(d))] = std::to_string(v.num()) + "/" + std::to_string(v.den());
    }
    return {{"task_id", task_id},
            {"means", m},
            {"means_exact", exact},
            {"composite", composite.to_fixed(2)},
            {"composite_exact", std::to_string(composite.num()) + "/" + std::to_string(composite.den())},
            {"classification", std::string(to_string(classification))},
            {"reviewers", reviewers}};
}

ScoreStore::ScoreStore(std::vector<TaskSpec> suite) : suite_(std::move(suite)) {}

void ScoreStore::record_score(const ReviewerScore& s) {
    if (s.value < 1 || s.value > 5)
        fail(Errc::out_of_range, "score " + std::to_string(s.value) + " outside 1..5");
    if (std::none_of(suite_.begin(), suite_.end(), [&](const TaskSpec& t) { return t.task_id == s.task_id; }))
        fail(Errc::unknown_task, "no task " + s.task_id + " in the suite");
    if (s.reviewer.empty()) fail(Errc::invalid_argument, "reviewer id is empty");
    std::lock_guard lock(mu_);
    scores_[s.task_id][s.reviewer][s.dimension] = s.value;
}

std::size_t ScoreStore::import_csv(const fs::path& path) {
    std::istringstream in(read_file(path));
    std::string line;
    std::size_t lineno = 0, rows = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(trim(cell));
        if (lineno == 1 && !cols.empty() && cols[0] == "task_id") {
            if (cols != std::vector<std::string>{"task_id", "reviewer", "dimension", "value"})
                fail(Errc::parse_error, "unexpected CSV header: " + line);
            continue;
        }
        if (cols.size() != 4) fail(Errc::parse_error, path.string() + ":" + std::to_string(lineno) + ": expected 4 columns");
        ReviewerScore s;
        s.task_id = cols[0];
        s.reviewer = cols[1];
        try {
            s.dimension = dimension_from_string(cols[2]);
        } catch (const Error& e) {
            fail(Errc::parse_error, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        std::size_t used = 0;
        try {
            s.value = std::stoi(cols[3], &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != cols[3].size())
            fail(Errc::parse_error, path.string() + ":" + std::to_string(lineno) + ": value is not an integer");
        record_score(s);
        ++rows;
    }
    return rows;
}

std::vector<ReviewerScore> ScoreStore::scores() const {
    std::lock_guard lock(mu_);
    std::vector<ReviewerScore> out;
    for (const auto& [task, by_reviewer] : scores_)
        for (const auto& [reviewer, by_dim] : by_reviewer)
            for (const auto& [dim, v] : by_dim) out.push_back({task, reviewer, dim, v});
    return out;
}

std::size_t ScoreStore::size() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [task, by_reviewer] : scores_)
        for (const auto& [reviewer, by_dim] : by_reviewer) n += by_dim.size();
    return n;
}

Scorecard ScoreStore::aggregate_scorecard(const std::string& task_id) const {
    if (std::none_of(suite_.begin(), suite_.end(), [&](const TaskSpec& t) { return t.task_id == task_id; }))
        fail(Errc::unknown_task, "no task " + task_id + " in the suite");
    std::lock_guard lock(mu_);
    auto it = scores_.find(task_id);
    if (it == scores_.end() || it->second.empty())
        fail(Errc::incomplete_scores, task_id + ": no reviewer has scored this task");
    std::string missing;
    for (const auto& [reviewer, by_dim] : it->second)
        for (auto d : kDimensions)
            if (!by_dim.count(d)) missing += (missing.empty() ? "" : ", ") + reviewer + " lacks " + std::string(to_string(d));
    if (!missing.empty()) fail(Errc::incomplete_scores, task_id + ": " + missing);

    Scorecard sc;
    sc.task_id = task_id;
    const auto n = std::int64_t(it->second.size());
    Rational composite;
    for (auto d : kDimensions) {
        std::int64_t sum = 0;
        for (const auto& [reviewer, by_dim] : it->second) sum += by_dim.at(d);
        sc.means[d] = Rational(sum, n);
        composite = composite + sc.means[d];
    }
    for (const auto& [reviewer, by_dim] : it->second) sc.reviewers.push_back(reviewer);
    sc.composite = composite / 3;
    sc.classification = classify(sc.composite);
    return sc;
}

std::vector<Scorecard> ScoreStore::scorecards() const {
    std::vector<Scorecard> out;
    for (const auto& t : suite_) {
        try {
            out.push_back(aggregate_scorecard(t.task_id));
        } catch (const Error& e) {
            if (e.code() != Errc::incomplete_scores) throw;
        }
    }
    return out;
}

json SuiteReport::to_json() const {
    json levels = json::object();
    for (const auto& [l, n] : level_counts) levels[std::string(to_string(l))] = n;
    json classes = json::object();
    for (const auto& [c, n] : classification_counts) classes[std::string(to_string(c))] = n;
    json ranking = json::array();
    for (const auto& [d, m] : dimension_ranking)
        ranking.push_back({{"dimension", std::string(to_string(d))}, {"mean", m.to_fixed(2)}});
    return {{"total", total},
            {"level_counts", levels},
            {"at_least_four", at_least_four},
            {"classification_counts", classes},
            {"dimension_ranking", ranking},
            {"summary", std::to_string(at_least_four) + " of " + std::to_string(total) + " at >= 4"}};
}

std::string SuiteReport::text() const {
    std::ostringstream os;
    os << "tasks: " << total << "\nlevels:";
    for (const auto& [l, n] : level_counts) os << " " << to_string(l) << "=" << n;
    os << "\n" << at_least_four << " of " << total << " at >= 4\nclassification:";
    for (const auto& [c, n] : classification_counts) os << " " << to_string(c) << "=" << n;
    os << "\nranking:";
    for (const auto& [d, m] : dimension_ranking) os << " " << to_string(d) << "(" << m.to_fixed(2) << ")";
    os << "\nlegend: > 4 expert_level, [2.5, 4] research_ready, [2, 2.5) gap, < 2 deficient\n";
    return os.str();
}

SuiteReport suite_report(const std::vector<TaskSpec>& suite, const std::vector<Scorecard>& scorecards) {
    if (scorecards.empty()) fail(Errc::missing_scorecards, "no scorecards");
    std::map<std::string, const Scorecard*> by_task;
    for (const auto& s : scorecards) by_task[s.task_id] = &s;
    std::string missing;
    for (const auto& t : suite)
        if (!by_task.count(t.task_id)) missing += (missing.empty() ? "" : ", ") + t.task_id;
    if (!missing.empty()) fail(Errc::missing_scorecards, "no scorecard for " + missing);

    SuiteReport r;
    r.total = suite.size();
    for (auto l : {Level::L1, Level::L2, Level::L3, Level::L4, Level::L5}) r.level_counts[l] = 0;
    for (auto c : {Classification::expert_level, Classification::research_ready, Classification::gap,
                   Classification::deficient})
        r.classification_counts[c] = 0;
    std::map<Dimension, Rational> sums;
    for (const auto& t : suite) {
        ++r.level_counts[t.level];
        const auto& sc = *by_task.at(t.task_id);
        if (sc.composite >= Rational(4)) ++r.at_least_four;
        ++r.classification_counts[sc.classification];
        for (auto d : kDimensions) sums[d] = sums[d] + sc.means.at(d);
    }
    for (auto d : kDimensions)
        r.dimension_ranking.emplace_back(d, suite.empty() ? Rational() : sums[d] / std::int64_t(suite.size()));
    std::stable_sort(r.dimension_ranking.begin(), r.dimension_ranking.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return r;
}

}  // namespace climagent::eval
