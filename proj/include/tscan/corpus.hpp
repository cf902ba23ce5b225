#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "tscan/error.hpp"
#include "tscan/random.hpp"

namespace tscan {

enum class Speaker { Agent, User };

inline const char* speaker_name(Speaker s) { return s == Speaker::Agent ? "agent" : "user"; }

struct Utterance {
  std::string utterance_id;
  std::string dialog_id;
  int turn_index = 1;
  Speaker speaker = Speaker::Agent;
  std::string text;

  bool operator==(const Utterance&) const = default;
};

struct Turn {
  Utterance agent;
  std::optional<Utterance> user;

  bool operator==(const Turn&) const = default;
};

struct Dialog {
  std::string dialog_id;
  std::vector<Turn> turns;

  bool operator==(const Dialog&) const = default;
};

/// Dialogs in first-appearance order, turns ordered by turn index.
struct Corpus {
  std::vector<Dialog> dialogs;

  bool operator==(const Corpus&) const = default;

  /// Every utterance in canonical order: dialog by dialog, agent before user.
  std::vector<const Utterance*> utterances() const {
    std::vector<const Utterance*> out;
    for (const auto& d : dialogs)
      for (const auto& t : d.turns) {
        out.push_back(&t.agent);
        if (t.user) out.push_back(&*t.user);
      }
    return out;
  }

  std::size_t utterance_count() const {
    std::size_t n = 0;
    for (const auto& d : dialogs)
      for (const auto& t : d.turns) n += t.user ? 2 : 1;
    return n;
  }
};

struct GroundTruth {
  std::map<std::string, int> state_of;
  std::map<std::string, std::string> intent_of;

  bool operator==(const GroundTruth&) const = default;

  int num_states() const {
    int n = 0;
    for (const auto& [id, s] : state_of) n = std::max(n, s + 1);
    return n;
  }
};

struct SyntheticSpec {
  int num_states = 1;
  /// num_states rows of num_states + 1 entries; the last column is "end".
  std::vector<std::vector<double>> transition_matrix;
  int templates_per_state = 1;
  int slot_vocab_size = 1;
  int num_dialogs = 1;
  std::uint64_t seed = 0;
  int start_state = 0;
  /// Walks are cut at this many turns so cyclic chains terminate.
  int max_turns = 64;
};

namespace detail {

inline Speaker parse_speaker(const std::string& s, std::size_t line_no) {
  if (s == "agent") return Speaker::Agent;
  if (s == "user") return Speaker::User;
  throw input_error("line " + std::to_string(line_no) + ": speaker must be \"agent\" or \"user\"");
}

inline std::string require_string(const nlohmann::json& obj, const char* key, std::size_t line_no) {
  const auto& v = obj.at(key);
  if (!v.is_string())
    throw input_error("line " + std::to_string(line_no) + ": field \"" + key + "\" must be a string");
  return v.get<std::string>();
}

}  // namespace detail

/// Groups utterance records into dialogs and validates the turn structure.
inline Corpus assemble_corpus(const std::vector<Utterance>& records) {
  if (records.empty()) throw input_error("empty corpus");

  std::unordered_set<std::string> seen_ids;
  std::vector<std::string> order;
  std::unordered_map<std::string, std::map<int, std::pair<std::optional<Utterance>, std::optional<Utterance>>>> by_dialog;

  for (const auto& u : records) {
    if (!seen_ids.insert(u.utterance_id).second)
      throw input_error("duplicate utterance_id \"" + u.utterance_id + "\"");
    if (u.turn_index < 1)
      throw input_error("utterance \"" + u.utterance_id + "\": turn must be >= 1");
    if (u.text.empty()) throw input_error("utterance \"" + u.utterance_id + "\": empty text");
    auto [it, inserted] = by_dialog.try_emplace(u.dialog_id);
    if (inserted) order.push_back(u.dialog_id);
    auto& slot = it->second[u.turn_index];
    auto& target = u.speaker == Speaker::Agent ? slot.first : slot.second;
    if (target)
      throw input_error("dialog \"" + u.dialog_id + "\" turn " + std::to_string(u.turn_index) +
                        ": more than one " + speaker_name(u.speaker) + " utterance");
    target = u;
  }

  Corpus corpus;
  for (const auto& did : order) {
    Dialog d;
    d.dialog_id = did;
    const auto& turns = by_dialog.at(did);
    std::size_t i = 0;
    for (const auto& [t, pair] : turns) {
      ++i;
      if (!pair.first)
        throw input_error("dialog \"" + did + "\" turn " + std::to_string(t) +
                          ": user utterance without agent utterance");
      if (!pair.second && i != turns.size())
        throw input_error("dialog \"" + did + "\" turn " + std::to_string(t) +
                          ": missing user utterance before the final turn");
      d.turns.push_back(Turn{*pair.first, pair.second});
    }
    corpus.dialogs.push_back(std::move(d));
  }
  return corpus;
}

inline Corpus parse_corpus(std::istream& in) {
  std::vector<Utterance> records;
  std::string line;
  std::size_t line_no = 0;
  static const std::set<std::string> keys = {"utterance_id", "dialog_id", "turn", "speaker", "text"};
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw input_error("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    if (!obj.is_object() || obj.size() != keys.size())
      throw input_error("line " + std::to_string(line_no) + ": expected an object with exactly 5 keys");
    for (const auto& k : keys)
      if (!obj.contains(k))
        throw input_error("line " + std::to_string(line_no) + ": missing key \"" + k + "\"");
    const auto& turn = obj.at("turn");
    if (!turn.is_number_integer() || turn.get<long long>() < 1)
      throw input_error("line " + std::to_string(line_no) + ": \"turn\" must be a positive integer");
    Utterance u;
    u.utterance_id = detail::require_string(obj, "utterance_id", line_no);
    u.dialog_id = detail::require_string(obj, "dialog_id", line_no);
    u.turn_index = static_cast<int>(turn.get<long long>());
    u.speaker = detail::parse_speaker(detail::require_string(obj, "speaker", line_no), line_no);
    u.text = detail::require_string(obj, "text", line_no);
    if (u.text.empty()) throw input_error("line " + std::to_string(line_no) + ": empty text");
    records.push_back(std::move(u));
  }
  return assemble_corpus(records);
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open corpus \"" + path + "\"");
  return parse_corpus(in);
}

inline void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto* u : corpus.utterances()) {
    nlohmann::ordered_json obj;
    obj["utterance_id"] = u->utterance_id;
    obj["dialog_id"] = u->dialog_id;
    obj["turn"] = u->turn_index;
    obj["speaker"] = speaker_name(u->speaker);
    obj["text"] = u->text;
    out << obj.dump() << '\n';
  }
}

inline void write_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write \"" + path + "\"");
  write_corpus(corpus, out);
}

inline GroundTruth parse_ground_truth(std::istream& in) {
  GroundTruth truth;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw input_error("truth line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("utterance_id") || !obj.contains("state") ||
        !obj.contains("intent") || !obj["state"].is_number_integer() || obj["state"].get<int>() < 0)
      throw input_error("truth line " + std::to_string(line_no) + ": malformed record");
    const auto id = detail::require_string(obj, "utterance_id", line_no);
    if (truth.state_of.count(id)) throw input_error("truth: duplicate utterance_id \"" + id + "\"");
    truth.state_of[id] = obj["state"].get<int>();
    truth.intent_of[id] = detail::require_string(obj, "intent", line_no);
  }
  return truth;
}

inline GroundTruth load_ground_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open ground truth \"" + path + "\"");
  return parse_ground_truth(in);
}

/// Writes truth records in corpus order.
inline void write_ground_truth(const GroundTruth& truth, const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write \"" + path + "\"");
  for (const auto* u : corpus.utterances()) {
    nlohmann::ordered_json obj;
    obj["utterance_id"] = u->utterance_id;
    obj["state"] = truth.state_of.at(u->utterance_id);
    obj["intent"] = truth.intent_of.at(u->utterance_id);
    out << obj.dump() << '\n';
  }
}

/// Lexical stem shared by every template of a state.
inline std::string state_word(int state) {
  static const char* stems[] = {"greet",  "verify", "brand",  "product", "payment",
                                "amount", "due",    "number", "schedule", "hold",
                                "reason", "confirm", "thanks", "address", "email",
                                "refund", "balance", "plan",   "callback", "close"};
  constexpr int n = sizeof(stems) / sizeof(stems[0]);
  std::string w = stems[state % n];
  if (state >= n) w += std::to_string(state / n);
  return w;
}

inline void validate(const SyntheticSpec& spec) {
  if (spec.num_states < 1) throw config_error("synthetic: num_states must be >= 1");
  if (spec.templates_per_state < 1) throw config_error("synthetic: templates_per_state must be >= 1");
  if (spec.slot_vocab_size < 1) throw config_error("synthetic: slot_vocab_size must be >= 1");
  if (spec.num_dialogs < 1) throw config_error("synthetic: num_dialogs must be >= 1");
  if (spec.max_turns < 1) throw config_error("synthetic: max_turns must be >= 1");
  if (spec.start_state < 0 || spec.start_state >= spec.num_states)
    throw config_error("synthetic: start_state out of range");
  if (static_cast<int>(spec.transition_matrix.size()) != spec.num_states)
    throw config_error("synthetic: transition matrix needs one row per state");
  for (std::size_t r = 0; r < spec.transition_matrix.size(); ++r) {
    const auto& row = spec.transition_matrix[r];
    if (static_cast<int>(row.size()) != spec.num_states + 1)
      throw config_error("synthetic: row " + std::to_string(r) + " needs num_states + 1 entries");
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw config_error("synthetic: negative transition probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw config_error("synthetic: row " + std::to_string(r) + " does not sum to 1");
  }
}

/// Samples dialogs by walking the state machine. Each visited state emits an
/// agent and a user utterance of the form "<state-word> <variant> <filler> <filler>".
inline std::pair<Corpus, GroundTruth> generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(stream_seed(spec.seed, "gen-synthetic"));
  Corpus corpus;
  GroundTruth truth;

  auto render = [&](int state) {
    const int t = static_cast<int>(rng.index(static_cast<std::size_t>(spec.templates_per_state)));
    const std::string stem = state_word(state);
    std::string text = stem + " " + stem + "-" + std::to_string(t);
    for (int f = 0; f < 2; ++f)
      text += " slot" + std::to_string(rng.index(static_cast<std::size_t>(spec.slot_vocab_size)));
    return text;
  };

  char buf[64];
  for (int d = 0; d < spec.num_dialogs; ++d) {
    Dialog dialog;
    std::snprintf(buf, sizeof buf, "d%05d", d);
    dialog.dialog_id = buf;
    int state = spec.start_state;
    for (int turn = 1; turn <= spec.max_turns; ++turn) {
      Turn tr;
      for (Speaker who : {Speaker::Agent, Speaker::User}) {
        Utterance u;
        std::snprintf(buf, sizeof buf, "%s_t%03d_%c", dialog.dialog_id.c_str(), turn,
                      who == Speaker::Agent ? 'a' : 'u');
        u.utterance_id = buf;
        u.dialog_id = dialog.dialog_id;
        u.turn_index = turn;
        u.speaker = who;
        u.text = render(state);
        truth.state_of[u.utterance_id] = state;
        truth.intent_of[u.utterance_id] = state_word(state);
        if (who == Speaker::Agent)
          tr.agent = std::move(u);
        else
          tr.user = std::move(u);
      }
      dialog.turns.push_back(std::move(tr));
      const std::size_t next = rng.categorical(spec.transition_matrix[static_cast<std::size_t>(state)]);
      if (static_cast<int>(next) == spec.num_states) break;
      state = static_cast<int>(next);
    }
    corpus.dialogs.push_back(std::move(dialog));
  }
  return {std::move(corpus), std::move(truth)};
}

/// Reads a whitespace-separated row-stochastic matrix (one state per line,
/// last column is the end probability).
inline std::vector<std::vector<double>> parse_transition_matrix(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (!ss.eof()) throw config_error("transition matrix: non-numeric entry");
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tscan
