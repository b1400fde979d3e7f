#include "climagent/library.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "climagent/error.hpp"

namespace climagent::library {

std::string_view to_string(Kind k) {
    switch (k) {
        case Kind::plan: return "plan";
        case Kind::code_template: return "template";
        case Kind::tool_doc: return "tool_doc";
    }
    return "plan";
}

std::string_view to_string(Provenance p) { return p == Provenance::seeded ? "seeded" : "promoted"; }
std::string_view to_string(Status s) { return s == Status::draft ? "draft" : "validated"; }

Kind kind_from_string(std::string_view s) {
    if (s == "plan") return Kind::plan;
    if (s == "template") return Kind::code_template;
    if (s == "tool_doc") return Kind::tool_doc;
    fail(Errc::invalid_argument, "unknown record kind '" + std::string(s) + "'");
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "seeded") return Provenance::seeded;
    if (s == "promoted") return Provenance::promoted;
    fail(Errc::invalid_argument, "unknown provenance '" + std::string(s) + "'");
}

Status status_from_string(std::string_view s) {
    if (s == "draft") return Status::draft;
    if (s == "validated") return Status::validated;
    fail(Errc::invalid_argument, "unknown status '" + std::string(s) + "'");
}

void TemplateRecord::validate() const {
    if (query_text.empty() || code.empty() || result_digest.empty())
        fail(Errc::invalid_argument, "template triplet needs query_text, code and result_digest");
}

json TemplateRecord::to_json() const {
    return {{"query_text", query_text}, {"code", code}, {"result_digest", result_digest},
            {"runtime_tag", runtime_tag}};
}

TemplateRecord TemplateRecord::from_json(const json& j) {
    TemplateRecord t;
    t.query_text = j.value("query_text", "");
    t.code = j.value("code", "");
    t.result_digest = j.value("result_digest", "");
    t.runtime_tag = j.value("runtime_tag", "");
    return t;
}

void ToolManifest::validate(const fs::path& base) const {
    if (name.empty()) fail(Errc::invariant_violation, "tool manifest without name");
    fs::path ep(entrypoint);
    if (ep.is_relative() && !base.empty()) ep = base / ep;
    if (entrypoint.empty() || !fs::exists(ep))
        fail(Errc::invariant_violation, "tool '" + name + "' entrypoint missing: " + ep.string());
    std::set<std::string> seen;
    for (const auto& p : params)
        if (!seen.insert(p.name).second)
            fail(Errc::invariant_violation, "tool '" + name + "' repeats parameter '" + p.name + "'");
}

json ToolManifest::to_json() const {
    json ps = json::array();
    for (const auto& p : params) ps.push_back({{"name", p.name}, {"type", p.type}, {"units", p.units}});
    return {{"name", name},       {"entrypoint", entrypoint}, {"subcommand", subcommand},
            {"runtime_tag", runtime_tag}, {"params_schema", ps}, {"inputs", inputs},
            {"outputs", outputs}, {"description", description}};
}

ToolManifest ToolManifest::from_json(const json& j) {
    ToolManifest m;
    m.name = j.value("name", "");
    m.entrypoint = j.value("entrypoint", "");
    m.subcommand = j.value("subcommand", "");
    m.runtime_tag = j.value("runtime_tag", "");
    for (const auto& p : j.value("params_schema", json::array()))
        m.params.push_back({p.value("name", ""), p.value("type", ""), p.value("units", "")});
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.description = j.value("description", "");
    return m;
}

json KnowledgeRecord::to_json() const {
    return {{"id", id},
            {"kind", to_string(kind)},
            {"summary", summary},
            {"embedding", embedding},
            {"payload", payload},
            {"provenance", to_string(provenance)},
            {"status", to_string(status)},
            {"run_id", run_id},
            {"created_at", created_at},
            {"sequence", sequence}};
}

KnowledgeRecord KnowledgeRecord::from_json(const json& j) {
    KnowledgeRecord r;
    r.id = j.at("id").get<std::string>();
    r.kind = kind_from_string(j.at("kind").get<std::string>());
    r.summary = j.value("summary", "");
    r.embedding = j.value("embedding", gateway::Embedding{});
    r.payload = j.value("payload", json::object());
    r.provenance = provenance_from_string(j.value("provenance", "seeded"));
    r.status = status_from_string(j.value("status", "validated"));
    r.run_id = j.value("run_id", "");
    r.created_at = j.value("created_at", "");
    r.sequence = j.value("sequence", std::uint64_t{0});
    return r;
}

namespace {

bool same_embedding(const gateway::Embedding& a, const gateway::Embedding& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i] - b[i]) > 1e-9) return false;
    return true;
}

bool same_content(const KnowledgeRecord& a, const KnowledgeRecord& b) {
    return a.kind == b.kind && a.summary == b.summary && a.payload == b.payload &&
           a.provenance == b.provenance && a.status == b.status && a.run_id == b.run_id;
}

}  // namespace

Library::Library(const gateway::Gateway& gateway, fs::path dir, std::size_t snapshot_every)
    : gateway_(gateway), dir_(std::move(dir)), snapshot_every_(std::max<std::size_t>(1, snapshot_every)) {
    if (!dir_.empty()) load();
}

void Library::load() {
    fs::create_directories(dir_);
    std::unique_lock lock(mu_);
    auto snap = dir_ / "snapshot.json";
    std::size_t covered = 0;
    if (fs::exists(snap)) {
        auto doc = read_json_file(snap);
        covered = doc.at("log_lines").get<std::size_t>();
        for (const auto& r : doc.at("records")) records_.push_back(KnowledgeRecord::from_json(r));
    }
    auto log = dir_ / "records.jsonl";
    std::size_t lines = 0;
    if (fs::exists(log)) {
        for (const auto& entry : read_json_lines(log)) {
            ++lines;
            if (lines <= covered) continue;
            auto rec = KnowledgeRecord::from_json(entry.at("record"));
            auto it = std::find_if(records_.begin(), records_.end(),
                                   [&](const auto& r) { return r.id == rec.id; });
            if (it != records_.end()) {
                *it = std::move(rec);
            } else {
                records_.push_back(std::move(rec));
            }
        }
    }
    log_lines_ = lines;
    for (const auto& r : records_) next_sequence_ = std::max(next_sequence_, r.sequence + 1);
}

std::string Library::index_record(KnowledgeRecord record, bool replace) {
    std::unique_lock lock(mu_);
    return index_locked(std::move(record), replace, true);
}

std::string Library::index_locked(KnowledgeRecord record, bool replace, bool persist) {
    if (record.id.empty()) fail(Errc::invalid_argument, "record id is empty");
    if (record.provenance == Provenance::promoted && record.run_id.empty())
        fail(Errc::missing_run_reference, "promoted record " + record.id + " lacks a run id");
    if (record.kind == Kind::code_template) TemplateRecord::from_json(record.payload).validate();
    if (record.kind == Kind::tool_doc) {
        auto m = ToolManifest::from_json(record.payload);
        if (m.name.empty()) fail(Errc::invalid_argument, "tool_doc payload without a manifest name");
    }

    auto expected = gateway_.embed(record.summary);
    if (record.embedding.empty()) {
        record.embedding = std::move(expected);
    } else if (!same_embedding(record.embedding, expected)) {
        fail(Errc::embedding_mismatch, "stored embedding of " + record.id + " != embed(summary)");
    }

    auto it = std::find_if(records_.begin(), records_.end(), [&](const auto& r) { return r.id == record.id; });
    if (it != records_.end()) {
        if (same_content(*it, record)) return record.id;
        if (!replace)
            fail(Errc::duplicate_id_conflict, "record " + record.id + " exists with different content");
        record.sequence = it->sequence;
        record.created_at = it->created_at;
        *it = std::move(record);
        if (persist) persist_locked(*it);
        return it->id;
    }
    record.sequence = next_sequence_++;
    if (record.created_at.empty()) record.created_at = now_iso8601();
    records_.push_back(std::move(record));
    if (persist) persist_locked(records_.back());
    return records_.back().id;
}

void Library::persist_locked(const KnowledgeRecord& record) {
    if (dir_.empty()) return;
    append_line(dir_ / "records.jsonl", json{{"op", "index"}, {"record", record.to_json()}}.dump());
    ++log_lines_;
    if (++since_snapshot_ >= snapshot_every_) snapshot_locked();
}

void Library::snapshot() {
    std::unique_lock lock(mu_);
    snapshot_locked();
}

void Library::snapshot_locked() {
    if (dir_.empty()) return;
    json recs = json::array();
    for (const auto& r : records_) recs.push_back(r.to_json());
    write_json_file(dir_ / "snapshot.json", {{"log_lines", log_lines_}, {"records", recs}});
    since_snapshot_ = 0;
}

std::vector<ScoredRecord> Library::retrieve(const gateway::Embedding& query, int k, Filter filter) const {
    if (k <= 0) fail(Errc::invalid_k, "k must be positive, got " + std::to_string(k));
    std::shared_lock lock(mu_);
    std::vector<ScoredRecord> scored;
    for (const auto& r : records_) {
        if (!filter.accepts(r)) continue;
        scored.push_back({r, gateway::cosine(query, r.embedding)});
    }
    auto better = [](const ScoredRecord& a, const ScoredRecord& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.record.id < b.record.id;
    };
    auto top = std::min<std::size_t>(static_cast<std::size_t>(k), scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(top), scored.end(), better);
    scored.resize(top);
    return scored;
}

std::vector<ScoredRecord> Library::retrieve_text(std::string_view text, int k, Filter filter) const {
    return retrieve(gateway_.embed(text), k, filter);
}

std::string Library::template_id(const std::string& run_ref, const std::string& query_text) {
    return "tpl-" + sha256_hex(run_ref + "\n" + query_text).substr(0, 16);
}

std::string Library::promote_template(const TemplateRecord& triplet, const ReviewDecision& approval,
                                      std::optional<std::string> id) {
    if (!approval.approved) fail(Errc::not_approved, "promotion requires an approving review");
    if (approval.run_ref.empty()) fail(Errc::missing_run_reference, "approval does not reference a run");
    triplet.validate();
    KnowledgeRecord r;
    r.id = id.value_or(template_id(approval.run_ref, triplet.query_text));
    r.kind = Kind::code_template;
    r.summary = triplet.query_text;
    r.payload = triplet.to_json();
    r.payload["approved_by"] = approval.reviewer;
    r.provenance = Provenance::promoted;
    r.status = Status::validated;
    r.run_id = approval.run_ref;
    return index_record(std::move(r), true);
}

std::string Library::queue_draft(const TemplateRecord& triplet, const std::string& run_ref,
                                 std::optional<std::string> id) {
    if (run_ref.empty()) fail(Errc::missing_run_reference, "draft does not reference a run");
    triplet.validate();
    auto rid = id.value_or(template_id(run_ref, triplet.query_text));
    {
        std::shared_lock lock(mu_);
        auto it = std::find_if(records_.begin(), records_.end(), [&](const auto& r) { return r.id == rid; });
        if (it != records_.end() && it->status == Status::validated) return rid;  // never demote
    }
    KnowledgeRecord r;
    r.id = rid;
    r.kind = Kind::code_template;
    r.summary = triplet.query_text;
    r.payload = triplet.to_json();
    r.provenance = Provenance::promoted;
    r.status = Status::draft;
    r.run_id = run_ref;
    return index_record(std::move(r), true);
}

std::vector<KnowledgeRecord> Library::list_records(std::optional<Kind> kind,
                                                   std::optional<Status> status) const {
    std::shared_lock lock(mu_);
    Filter f{kind, status};
    std::vector<KnowledgeRecord> out;
    for (const auto& r : records_)
        if (f.accepts(r)) out.push_back(r);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.sequence < b.sequence; });
    return out;
}

std::optional<KnowledgeRecord> Library::get(const std::string& id) const {
    std::shared_lock lock(mu_);
    for (const auto& r : records_)
        if (r.id == id) return r;
    return std::nullopt;
}

std::size_t Library::size() const {
    std::shared_lock lock(mu_);
    return records_.size();
}

std::size_t Library::seed_from(const fs::path& jsonl, const fs::path& tool_base) {
    std::size_t n = 0;
    for (const auto& row : read_json_lines(jsonl)) {
        KnowledgeRecord r;
        r.id = row.at("id").get<std::string>();
        r.kind = kind_from_string(row.at("kind").get<std::string>());
        r.summary = row.at("summary").get<std::string>();
        r.payload = row.value("payload", json::object());
        r.provenance = Provenance::seeded;
        r.status = Status::validated;
        if (r.kind == Kind::tool_doc) ToolManifest::from_json(r.payload).validate(tool_base);
        index_record(std::move(r), true);
        ++n;
    }
    return n;
}

}  // namespace climagent::library
