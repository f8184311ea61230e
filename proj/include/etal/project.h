// Copyright 2026 The etal Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "etal/al_loop.h"
#include "etal/corpus.h"
#include "etal/eval.h"
#include "etal/model.h"
#include "etal/selection.h"

namespace etal {

inline constexpr int kProjectSchemaVersion = 1;

struct ProjectConfig {
  SchemeConfig scheme;
  SelectionConfig selection;
  FeatureConfig features;
  int budget = 200;
  std::uint64_t seed = 1;
  int session_minutes = 20;

  friend bool operator==(const ProjectConfig&, const ProjectConfig&) = default;
};

enum class RoundStatus { kOpen, kFinalizing, kClosed };

std::string round_status_name(RoundStatus s);

struct Session {
  std::string id;
  std::string annotator;
  Strategy mode = Strategy::kEtal;
  std::int64_t start_ms = 0;
  int duration_s = 0;
  // Batch item indices, in dispensing order.
  std::vector<int> served;
  std::vector<int> completed;

  bool expired(std::int64_t now_ms) const { return now_ms >= start_ms + std::int64_t{duration_s} * 1000; }
  friend bool operator==(const Session&, const Session&) = default;
};

struct RoundMetrics {
  int tokens_round = 0;
  long tokens_cumulative = 0;
  int answers = 0;
  int entities = 0;
  // Annotator entities against gold on the annotated regions, when gold is known.
  std::optional<SpanCounts> annotator;
  // Model after retraining, on the project's test split when it has one.
  std::optional<SpanCounts> test;

  friend bool operator==(const RoundMetrics&, const RoundMetrics&) = default;
};

struct ProjectRound {
  int index = 0;
  RoundStatus status = RoundStatus::kOpen;
  SelectionBatch batch;
  std::vector<Session> sessions;
  std::optional<RoundMetrics> metrics;
  // Last retraining failure; the round stays open.
  std::string error;

  friend bool operator==(const ProjectRound&, const ProjectRound&) = default;
};

// One accepted annotator action. Rejected submissions are never logged.
struct AnnotationEvent {
  std::string event_id;
  int round = 0;
  int item = 0;
  std::string session;
  std::string annotator;
  std::int64_t time_ms = 0;
  bool skipped = false;
  // Region read, after boundary adjustment.
  int start = 0;
  int end = 0;
  std::vector<Entity> entities;

  Answer answer() const { return {item, start, end, entities, skipped}; }
  friend bool operator==(const AnnotationEvent&, const AnnotationEvent&) = default;
};

struct ProjectState {
  int schema_version = kProjectSchemaVersion;
  std::string name;
  LabelScheme scheme;
  ProjectConfig config;
  // Tokens only.
  std::vector<LabeledSequence> pool;
  // Either empty or the pool with gold labels, in pool order.
  std::vector<LabeledSequence> gold;
  std::vector<LabeledSequence> transferred;
  std::vector<LabeledSequence> test;
  std::vector<ProjectRound> rounds;
  std::vector<AnnotationEvent> events;
  // Snapshot file under models/, e.g. "000.bin" for the transferred-data model.
  std::string current_model;

  ProjectRound* open_round();
  friend bool operator==(const ProjectState&, const ProjectState&) = default;
};

// Exclusive advisory lock on <dir>/.lock, held for the lifetime of the object.
class ProjectLock {
 public:
  explicit ProjectLock(const std::string& dir);
  ~ProjectLock();
  ProjectLock(const ProjectLock&) = delete;
  ProjectLock& operator=(const ProjectLock&) = delete;

 private:
  int fd_ = -1;
};

// Layout: project.json, rounds/NNN.json, pool/gold/transferred/test.jsonl,
// events.jsonl, models/*.bin. Every file is replaced atomically.
void save_project(const ProjectState& state, const std::string& dir);
// Rewrites project.json and the round files only; corpora and events are
// left as they are.
void save_project_meta(const ProjectState& state, const std::string& dir);
// Throws VersionError on a schema mismatch and CorruptFileError on any
// unreadable or inconsistent file; never returns a partial state.
ProjectState load_project(const std::string& dir);

// Appends one line to events.jsonl and flushes it to disk.
void append_event(const std::string& dir, const AnnotationEvent& event);

std::string snapshot_name(int round);
void save_snapshot(const std::string& dir, const std::string& name, const CrfModel& model);
CrfModel load_snapshot(const std::string& dir, const std::string& name);

std::string event_to_json(const AnnotationEvent& event);
AnnotationEvent event_from_json(std::string_view line);

// Constraint state obtained by applying the logged events in order.
AcquiredData replay_events(const ProjectState& state, const SequencePool& pool);
// Annotator entities vs gold entities inside each answered region.
SpanCounts annotator_counts(const ProjectState& state, int round);

}  // namespace etal
