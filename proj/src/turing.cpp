#include "pancsynth/turing.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "pancsynth/nifti_io.hpp"
#include "pancsynth/rng.hpp"

namespace pancsynth::turing {

using nlohmann::json;

std::string to_string(Truth t) { return t == Truth::real ? "real" : "synthetic"; }

Truth parse_truth(const std::string& s) {
  if (s == "real") return Truth::real;
  if (s == "synthetic") return Truth::synthetic;
  throw ServiceError(ErrorKind::bad_request, "judgment must be 'real' or 'synthetic'");
}

namespace {

std::string policy_name(SlicePolicy p) { return p == SlicePolicy::max_area ? "max_area" : "random"; }

struct Candidate {
  std::string case_id, volume, tumor_mask;
  Truth truth;
};

std::vector<Candidate> draw(const Manifest& m, Truth truth, std::size_t n, Rng& rng) {
  m.require_columns({"volume", "tumor_mask"});
  if (m.size() < n)
    throw InvariantError("manifest has " + std::to_string(m.size()) + " cases, " +
                         std::to_string(n) + " requested");
  std::vector<std::size_t> rows(m.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(n);
  std::sort(rows.begin(), rows.end());
  std::vector<Candidate> out;
  for (auto r : rows)
    out.push_back({m.case_id(r), std::filesystem::absolute(m.path(r, "volume")).string(),
                   std::filesystem::absolute(m.path(r, "tumor_mask")).string(), truth});
  return out;
}

json item_to_json(const StudyItem& it) {
  return {{"item_id", it.item_id}, {"case_id", it.case_id},     {"volume", it.volume},
          {"tumor_mask", it.tumor_mask}, {"slice", it.slice}, {"truth", to_string(it.truth)},
          {"radius_mm", it.radius_mm}};
}

StudyItem item_from_json(const json& j) {
  StudyItem it;
  it.item_id = j.at("item_id").get<int>();
  it.case_id = j.at("case_id").get<std::string>();
  it.volume = j.at("volume").get<std::string>();
  it.tumor_mask = j.at("tumor_mask").get<std::string>();
  it.slice = j.at("slice").get<std::int64_t>();
  it.truth = parse_truth(j.at("truth").get<std::string>());
  it.radius_mm = j.at("radius_mm").get<double>();
  return it;
}

std::string new_session_id() {
  std::random_device rd;
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(8) << rd() << std::setw(8) << rd();
  return os.str();
}

// Shared validation for live submissions and log replay.
void apply_response(ReaderSession& s, const Response& r) {
  if (s.status() == Status::complete)
    throw ServiceError(ErrorKind::conflict, "session is complete");
  const auto& current = s.items[s.responses.size()];
  if (r.item_id != current.item_id) {
    const bool answered = std::any_of(s.responses.begin(), s.responses.end(),
                                      [&](const Response& x) { return x.item_id == r.item_id; });
    throw ServiceError(ErrorKind::conflict,
                       answered ? "item " + std::to_string(r.item_id) + " was already answered"
                                : "item " + std::to_string(r.item_id) +
                                      " is not the current item (expected " +
                                      std::to_string(current.item_id) + ")");
  }
  if (!(r.confidence >= 0.0 && r.confidence <= 1.0))
    throw ServiceError(ErrorKind::bad_request, "confidence must be in [0, 1]");
  if (r.elapsed_ms < 0) throw ServiceError(ErrorKind::bad_request, "elapsed_ms must be >= 0");
  s.responses.push_back(r);
}

NextItem view_of(const ReaderSession& s) {
  NextItem n;
  n.status = s.status();
  n.answered = s.responses.size();
  n.total = s.items.size();
  if (n.status == Status::active) n.item_id = s.items[s.responses.size()].item_id;
  return n;
}

}  // namespace

std::int64_t select_slice(const Mask& tumor, SlicePolicy policy, std::uint64_t seed) {
  const auto& d = tumor.dims();
  std::vector<std::size_t> area(d[2], 0);
  for (std::size_t z = 0; z < d[2]; ++z)
    for (std::size_t y = 0; y < d[1]; ++y)
      for (std::size_t x = 0; x < d[0]; ++x)
        if (tumor(x, y, z) > 0) ++area[z];
  std::vector<std::int64_t> bearing;
  for (std::size_t z = 0; z < d[2]; ++z)
    if (area[z] > 0) bearing.push_back(static_cast<std::int64_t>(z));
  if (bearing.empty()) throw InvariantError("tumor mask is empty");
  if (policy == SlicePolicy::random) {
    Rng rng(seed);
    return bearing[std::min(bearing.size() - 1,
                            static_cast<std::size_t>(uniform01(rng) *
                                                     static_cast<double>(bearing.size())))];
  }
  return static_cast<std::int64_t>(std::max_element(area.begin(), area.end()) - area.begin());
}

std::vector<StudyItem> build_study_items(const Manifest& real, const Manifest& synthetic,
                                         const SessionOptions& opts) {
  if (opts.n_per_class < 1) throw InvariantError("n_per_class must be >= 1");
  Rng rng(opts.seed);
  auto pool = draw(real, Truth::real, opts.n_per_class, rng);
  auto more = draw(synthetic, Truth::synthetic, opts.n_per_class, rng);
  pool.insert(pool.end(), more.begin(), more.end());
  std::shuffle(pool.begin(), pool.end(), rng);

  std::vector<StudyItem> items;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& c = pool[i];
    const Mask tumor = read_mask(c.tumor_mask);
    StudyItem it;
    it.item_id = static_cast<int>(i + 1);
    it.case_id = c.case_id;
    it.volume = c.volume;
    it.tumor_mask = c.tumor_mask;
    it.truth = c.truth;
    it.slice = select_slice(tumor, opts.slice_policy, derive_seed(opts.seed, i));
    for (const auto& inst : extract_instances(tumor))
      it.radius_mm = std::max(it.radius_mm, inst.equivalent_radius_mm);
    items.push_back(std::move(it));
  }
  return items;
}

StudyResult compute_results(const ReaderSession& s) {
  StudyResult r;
  r.n_items = s.items.size();
  r.n_answered = s.responses.size();
  r.radius_threshold_mm = s.options.radius_threshold_mm;
  std::ostringstream thr;
  thr << r.radius_threshold_mm;
  r.by_radius = {{"radius < " + thr.str() + " mm", 0, 0, std::nullopt}, {"radius >= " + thr.str() + " mm", 0, 0, std::nullopt}};

  std::vector<int> labels;
  std::vector<double> scores;
  for (std::size_t i = 0; i < s.responses.size(); ++i) {
    const auto& resp = s.responses[i];
    const auto& item = s.items[i];
    const bool correct = resp.judgment == item.truth;
    r.correct += correct;
    auto& bin = r.by_radius[item.radius_mm < r.radius_threshold_mm ? 0 : 1];
    ++bin.n;
    bin.correct += correct;
    labels.push_back(item.truth == Truth::synthetic ? 1 : 0);
    scores.push_back(resp.judgment == Truth::synthetic ? resp.confidence : 1.0 - resp.confidence);
  }
  if (r.n_answered > 0)
    r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.n_answered);
  for (auto& b : r.by_radius)
    if (b.n > 0) b.accuracy = static_cast<double>(b.correct) / static_cast<double>(b.n);
  const bool both = std::count(labels.begin(), labels.end(), 1) > 0 &&
                    std::count(labels.begin(), labels.end(), 0) > 0;
  if (both) r.roc = roc(labels, scores);
  return r;
}

json study_result_to_json(const StudyResult& r, const ReaderSession& s) {
  json j{{"session_id", s.id},
         {"n_items", r.n_items},
         {"n_answered", r.n_answered},
         {"correct", r.correct},
         {"accuracy", r.accuracy},
         {"radius_threshold_mm", r.radius_threshold_mm},
         {"overlay", s.options.overlay}};
  if (r.roc) {
    json pts = json::array();
    for (const auto& p : r.roc->points)
      pts.push_back({{"threshold", std::isinf(p.threshold) ? json(nullptr) : json(p.threshold)},
                     {"fpr", p.fpr},
                     {"tpr", p.tpr}});
    j["roc"] = {{"points", pts}, {"auc", r.roc->auc}};
  } else {
    j["roc"] = nullptr;
  }
  j["by_radius"] = json::array();
  for (const auto& b : r.by_radius)
    j["by_radius"].push_back({{"label", b.label},
                              {"n", b.n},
                              {"correct", b.correct},
                              {"accuracy", b.accuracy ? json(*b.accuracy) : json(nullptr)}});
  j["items"] = json::array();
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    const auto& it = s.items[i];
    json row{{"item_id", it.item_id},
             {"case_id", it.case_id},
             {"truth", to_string(it.truth)},
             {"radius_mm", it.radius_mm}};
    if (i < s.responses.size()) {
      row["judgment"] = to_string(s.responses[i].judgment);
      row["confidence"] = s.responses[i].confidence;
      row["elapsed_ms"] = s.responses[i].elapsed_ms;
    }
    j["items"].push_back(row);
  }
  return j;
}

json options_to_json(const SessionOptions& o) {
  return {{"n_per_class", o.n_per_class},
          {"seed", o.seed},
          {"overlay", o.overlay},
          {"window", {{"level", o.window.level}, {"width", o.window.width}}},
          {"slice_policy", policy_name(o.slice_policy)},
          {"radius_threshold_mm", o.radius_threshold_mm}};
}

SessionOptions options_from_json(const json& j) {
  SessionOptions o;
  try {
    if (j.contains("n_per_class")) o.n_per_class = j.at("n_per_class").get<std::size_t>();
    if (j.contains("seed")) o.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("overlay")) o.overlay = j.at("overlay").get<bool>();
    if (j.contains("window")) {
      o.window.level = j.at("window").at("level").get<double>();
      o.window.width = j.at("window").at("width").get<double>();
    }
    if (j.contains("slice_policy")) {
      const auto p = j.at("slice_policy").get<std::string>();
      if (p == "max_area")
        o.slice_policy = SlicePolicy::max_area;
      else if (p == "random")
        o.slice_policy = SlicePolicy::random;
      else
        throw ServiceError(ErrorKind::bad_request, "slice_policy must be max_area or random");
    }
    if (j.contains("radius_threshold_mm"))
      o.radius_threshold_mm = j.at("radius_threshold_mm").get<double>();
  } catch (const json::exception& e) {
    throw ServiceError(ErrorKind::bad_request, std::string("invalid session options: ") + e.what());
  }
  if (!(o.window.width > 0.0)) throw ServiceError(ErrorKind::bad_request, "window width must be > 0");
  return o;
}

SessionStore::SessionStore(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {
  std::filesystem::create_directories(data_dir_);
  std::vector<std::filesystem::path> logs;
  for (const auto& e : std::filesystem::directory_iterator(data_dir_))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") logs.push_back(e.path());
  std::sort(logs.begin(), logs.end());
  for (const auto& l : logs) replay(l);
}

void SessionStore::replay(const std::filesystem::path& log) {
  std::ifstream in(log);
  if (!in) throw IoError("cannot read session log " + log.string());
  auto slot = std::make_shared<Slot>();
  auto& s = slot->session;
  std::string line;
  bool created = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto ev = json::parse(line);
      const auto kind = ev.at("event").get<std::string>();
      if (kind == "created") {
        s.id = ev.at("session_id").get<std::string>();
        s.options = options_from_json(ev.at("options"));
        for (const auto& it : ev.at("items")) s.items.push_back(item_from_json(it));
        created = true;
      } else if (!created) {
        throw IoError("event before 'created'");
      } else if (kind == "response") {
        apply_response(s, {ev.at("item_id").get<int>(),
                           parse_truth(ev.at("judgment").get<std::string>()),
                           ev.at("confidence").get<double>(), ev.at("elapsed_ms").get<std::int64_t>()});
      } else if (kind == "finalized") {
        s.finalized = true;
      } else {
        throw IoError("unknown event '" + kind + "'");
      }
    } catch (const std::exception& e) {
      throw IoError("corrupt session log " + log.string() + " line " + std::to_string(line_no) +
                    ": " + e.what());
    }
  }
  if (!created) throw IoError("session log without 'created' event: " + log.string());
  sessions_[s.id] = std::move(slot);
}

void SessionStore::append(const std::string& id, const json& event) const {
  std::ofstream out(data_dir_ / (id + ".jsonl"), std::ios::app);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append to session log for " + id);
}

std::string SessionStore::create(const Manifest& real, const Manifest& synthetic,
                                 const SessionOptions& opts) {
  return create(build_study_items(real, synthetic, opts), opts);
}

std::string SessionStore::create(std::vector<StudyItem> items, const SessionOptions& opts) {
  if (items.empty()) throw InvariantError("a session needs at least one item");
  auto slot = std::make_shared<Slot>();
  slot->session.options = opts;
  slot->session.items = std::move(items);

  std::unique_lock lock(map_mutex_);
  std::string id;
  do id = new_session_id();
  while (sessions_.count(id));
  slot->session.id = id;
  json ev{{"event", "created"}, {"session_id", id}, {"options", options_to_json(opts)}};
  ev["items"] = json::array();
  for (const auto& it : slot->session.items) ev["items"].push_back(item_to_json(it));
  append(id, ev);
  sessions_[id] = std::move(slot);
  return id;
}

std::shared_ptr<SessionStore::Slot> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(ErrorKind::not_found, "unknown session " + id);
  return it->second;
}

NextItem SessionStore::next(const std::string& id) const {
  const auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  return view_of(slot->session);
}

NextItem SessionStore::submit(const std::string& id, const Response& r) {
  const auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  ReaderSession updated = slot->session;
  apply_response(updated, r);
  append(id, {{"event", "response"},
              {"item_id", r.item_id},
              {"judgment", to_string(r.judgment)},
              {"confidence", r.confidence},
              {"elapsed_ms", r.elapsed_ms}});
  slot->session = std::move(updated);
  return view_of(slot->session);
}

void SessionStore::finalize(const std::string& id) {
  const auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  if (slot->session.finalized) return;
  append(id, {{"event", "finalized"}});
  slot->session.finalized = true;
}

StudyResult SessionStore::results(const std::string& id) const {
  const auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  if (slot->session.status() != Status::complete)
    throw ServiceError(ErrorKind::conflict, "session is not complete");
  return compute_results(slot->session);
}

ReaderSession SessionStore::snapshot(const std::string& id) const {
  const auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  return slot->session;
}

std::vector<std::uint8_t> SessionStore::item_image(const std::string& id, int item_id) const {
  const auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  const auto& s = slot->session;
  const auto it = std::find_if(s.items.begin(), s.items.end(),
                               [&](const StudyItem& x) { return x.item_id == item_id; });
  if (it == s.items.end())
    throw ServiceError(ErrorKind::not_found, "unknown item " + std::to_string(item_id));
  if (const auto cached = slot->image_cache.find(item_id); cached != slot->image_cache.end())
    return cached->second;
  const Volume v = read_volume(it->volume);
  auto img = s.options.overlay
                 ? render_slice_overlay(v, read_mask(it->tumor_mask), Axis::z, it->slice, s.options.window)
                 : render_slice(v, Axis::z, it->slice, s.options.window);
  slot->image_cache.emplace(item_id, img.png);
  return img.png;
}

std::vector<std::string> SessionStore::session_ids() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

}  // namespace pancsynth::turing
