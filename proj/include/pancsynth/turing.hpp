#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pancsynth/detect_eval.hpp"
#include "pancsynth/manifest.hpp"
#include "pancsynth/render.hpp"

namespace pancsynth::turing {

enum class Truth { real, synthetic };
std::string to_string(Truth t);
Truth parse_truth(const std::string& s);

enum class SlicePolicy { max_area, random };

inline constexpr double kDefaultRadiusThresholdMm = 20.0;

struct SessionOptions {
  std::size_t n_per_class = 50;
  std::uint64_t seed = 0;
  bool overlay = false;  // show the tumor mask on the slice
  WindowSpec window;
  SlicePolicy slice_policy = SlicePolicy::max_area;
  double radius_threshold_mm = kDefaultRadiusThresholdMm;
};

struct StudyItem {
  int item_id = 0;  // 1-based position in the shuffled order
  std::string case_id;
  std::string volume;      // absolute path
  std::string tumor_mask;  // absolute path
  std::int64_t slice = 0;  // axial index
  Truth truth = Truth::real;
  double radius_mm = 0.0;  // equivalent radius of the largest lesion
};

/// Draws n_per_class cases from each manifest (columns volume, tumor_mask,
/// optional case_id) without replacement, picks one axial slice per case and
/// shuffles the union with `seed`.
std::vector<StudyItem> build_study_items(const Manifest& real, const Manifest& synthetic,
                                         const SessionOptions& opts);

/// Axial slice with the most tumor voxels (ties: lowest index), or a random
/// tumor-bearing slice.
std::int64_t select_slice(const Mask& tumor, SlicePolicy policy, std::uint64_t seed);

struct Response {
  int item_id = 0;
  Truth judgment = Truth::real;
  double confidence = 0.0;
  std::int64_t elapsed_ms = 0;
};

enum class Status { active, complete };

struct ReaderSession {
  std::string id;
  SessionOptions options;
  std::vector<StudyItem> items;
  std::vector<Response> responses;  // in item order
  bool finalized = false;

  Status status() const {
    return responses.size() == items.size() || finalized ? Status::complete : Status::active;
  }
};

struct StratumAccuracy {
  std::string label;
  std::size_t n = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;
};

struct StudyResult {
  std::size_t n_items = 0;
  std::size_t n_answered = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::optional<RocCurve> roc;  // absent unless both classes were answered
  double radius_threshold_mm = kDefaultRadiusThresholdMm;
  std::vector<StratumAccuracy> by_radius;  // below / at-or-above the threshold
};

/// Accuracy over answered items and ROC with positive class "synthetic",
/// score = confidence for a synthetic judgment and 1 - confidence otherwise.
StudyResult compute_results(const ReaderSession& s);

nlohmann::json study_result_to_json(const StudyResult& r, const ReaderSession& s);

enum class ErrorKind { bad_request, not_found, conflict };

class ServiceError : public std::runtime_error {
 public:
  ServiceError(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Reader-facing view of the current item; never carries truth.
struct NextItem {
  Status status = Status::active;
  int item_id = 0;
  std::size_t answered = 0;
  std::size_t total = 0;
};

/// Sessions persisted as append-only JSON-lines event logs, one file per
/// session in `data_dir`. Existing logs are replayed on construction.
/// Thread-safe; writes to one session are serialized.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path data_dir);

  std::string create(const Manifest& real, const Manifest& synthetic, const SessionOptions& opts);
  /// Creates a session from prepared items (used by tests and exports).
  std::string create(std::vector<StudyItem> items, const SessionOptions& opts);

  NextItem next(const std::string& id) const;
  NextItem submit(const std::string& id, const Response& r);
  void finalize(const std::string& id);
  /// Throws conflict unless the session is complete or finalized.
  StudyResult results(const std::string& id) const;
  ReaderSession snapshot(const std::string& id) const;
  /// PNG of the item's slice, rendered with the session's window (and mask
  /// overlay when enabled).
  std::vector<std::uint8_t> item_image(const std::string& id, int item_id) const;
  std::vector<std::string> session_ids() const;

 private:
  struct Slot {
    mutable std::mutex mutex;
    ReaderSession session;
    mutable std::map<int, std::vector<std::uint8_t>> image_cache;
  };

  std::shared_ptr<Slot> find(const std::string& id) const;
  void append(const std::string& id, const nlohmann::json& event) const;
  void replay(const std::filesystem::path& log);

  std::filesystem::path data_dir_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
};

nlohmann::json options_to_json(const SessionOptions& o);
SessionOptions options_from_json(const nlohmann::json& j);

}  // namespace pancsynth::turing
