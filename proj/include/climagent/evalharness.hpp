#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "climagent/util.hpp"

// Task suite, rubric scores, aggregation and suite reporting.
namespace climagent::eval {

enum class Level { L1, L2, L3, L4, L5 };
std::string_view to_string(Level l);
Level level_from_string(std::string_view s);  // unknown_level

struct TaskSpec {
    std::string task_id;
    Level level = Level::L1;
    std::string description;
    std::string variable;

    json to_json() const;
    static TaskSpec from_json(const json& j);
};

// JSON lines. An empty file is an empty suite. Errors: parse_error,
// unknown_level, invariant_violation on duplicate ids.
std::vector<TaskSpec> load_suite(const fs::path& path);

enum class Dimension { planning, coding, synthesis };
inline constexpr Dimension kDimensions[] = {Dimension::planning, Dimension::coding, Dimension::synthesis};
std::string_view to_string(Dimension d);
Dimension dimension_from_string(std::string_view s);

struct ReviewerScore {
    std::string task_id;
    std::string reviewer;
    Dimension dimension = Dimension::planning;
    int value = 0;
};

// Exact non-negative fraction in lowest terms.
class Rational {
public:
    Rational(std::int64_t num = 0, std::int64_t den = 1);
    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }
    double to_double() const { return double(num_) / double(den_); }
    std::string to_fixed(int decimals) const;  // rounded half up

    friend Rational operator+(const Rational& a, const Rational& b);
    friend Rational operator/(const Rational& a, std::int64_t n);
    friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
    friend bool operator<(const Rational& a, const Rational& b);
    friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
    friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

private:
    std::int64_t num_;
    std::int64_t den_;
};

enum class Classification { expert_level, research_ready, deficient, gap };
std::string_view to_string(Classification c);

// > 4 expert_level; [2.5, 4] research_ready; [2, 2.5) gap; < 2 deficient.
Classification classify(double composite);
Classification classify(const Rational& composite);

struct Scorecard {
    std::string task_id;
    std::map<Dimension, Rational> means;
    Rational composite;
    Classification classification = Classification::gap;
    std::vector<std::string> reviewers;

    json to_json() const;
};

class ScoreStore {
public:
    explicit ScoreStore(std::vector<TaskSpec> suite);

    const std::vector<TaskSpec>& suite() const { return suite_; }

    // Upsert per (task, reviewer, dimension). Errors: out_of_range, unknown_task.
    void record_score(const ReviewerScore& s);
    // CSV with header task_id,reviewer,dimension,value. Returns rows read.
    std::size_t import_csv(const fs::path& path);

    std::vector<ReviewerScore> scores() const;
    std::size_t size() const;

    // Errors: unknown_task; incomplete_scores naming what is missing.
    Scorecard aggregate_scorecard(const std::string& task_id) const;
    // Scorecards for every task whose scores are complete.
    std::vector<Scorecard> scorecards() const;

private:
    std::vector<TaskSpec> suite_;
    mutable std::mutex mu_;
    // task -> reviewer -> dimension -> value
    std::map<std::string, std::map<std::string, std::map<Dimension, int>>> scores_;
};

struct SuiteReport {
    std::size_t total = 0;
    std::map<Level, std::size_t> level_counts;
    std::size_t at_least_four = 0;
    std::map<Classification, std::size_t> classification_counts;
    std::vector<std::pair<Dimension, Rational>> dimension_ranking;  // descending mean

    json to_json() const;
    std::string text() const;
};

// Errors: missing_scorecards when any suite task lacks a scorecard.
SuiteReport suite_report(const std::vector<TaskSpec>& suite, const std::vector<Scorecard>& scorecards);

}  // namespace climagent::eval
