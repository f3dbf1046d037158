#pragma once

// Template-grammar generator for synthetic slot-filling corpora.
//
// Grammar text, one directive per line ('#' starts a comment):
//
//   slot <name> <class|-> : filler words | other filler | ...
//   frame word word {name} word {name} ...
//
// A frame is chosen uniformly, each {name} is replaced by a uniformly
// chosen filler. Filler words are labelled "<name>-B" / "<name>-I" and
// carry the slot class; frame words are labelled "O" with class "-".

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "irnn/corpus.hpp"
#include "irnn/math.hpp"

namespace irnn {

struct SlotSpec {
  std::string name;
  std::string cls = "-";
  std::vector<std::vector<std::string>> fillers;
};

struct FrameElement {
  bool is_slot = false;
  std::string text;  // literal word or slot name
};

struct Grammar {
  std::map<std::string, SlotSpec> slots;
  std::vector<std::vector<FrameElement>> frames;

  std::size_t max_filler_length() const {
    std::size_t m = 0;
    for (const auto& [_, s] : slots)
      for (const auto& f : s.fillers) m = std::max(m, f.size());
    return m;
  }
};

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline Grammar parse_grammar(const std::string& text) {
  Grammar g;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto err = [&](const std::string& why) {
    return ConfigError("grammar line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != line.npos) line.erase(hash);
    auto words = split_ws(line);
    if (words.empty()) continue;
    if (words[0] == "slot") {
      auto colon = line.find(':');
      auto head = split_ws(std::string_view(line).substr(0, colon));
      if (colon == line.npos || head.size() != 3) throw err("expected 'slot <name> <class> : fillers'");
      SlotSpec spec{head[1], head[2], {}};
      std::string rest = line.substr(colon + 1);
      std::size_t start = 0;
      while (start <= rest.size()) {
        auto bar = rest.find('|', start);
        auto filler = split_ws(std::string_view(rest).substr(start, bar == rest.npos ? rest.npos : bar - start));
        if (filler.empty()) throw err("empty filler in slot " + spec.name);
        spec.fillers.push_back(std::move(filler));
        if (bar == rest.npos) break;
        start = bar + 1;
      }
      if (g.slots.contains(spec.name)) throw err("duplicate slot " + spec.name);
      g.slots.emplace(spec.name, std::move(spec));
    } else if (words[0] == "frame") {
      std::vector<FrameElement> frame;
      for (std::size_t i = 1; i < words.size(); ++i) {
        const auto& w = words[i];
        if (w.size() > 2 && w.front() == '{' && w.back() == '}') {
          frame.push_back({true, w.substr(1, w.size() - 2)});
        } else {
          frame.push_back({false, w});
        }
      }
      if (frame.empty()) throw err("empty frame");
      g.frames.push_back(std::move(frame));
    } else {
      throw err("unknown directive '" + words[0] + "'");
    }
  }
  for (const auto& frame : g.frames) {
    for (const auto& el : frame) {
      if (el.is_slot && !g.slots.contains(el.text)) throw ConfigError("grammar: frame uses undefined slot " + el.text);
    }
  }
  if (g.frames.empty()) throw ConfigError("grammar: no frames");
  return g;
}

// Flight-query grammar. Departure and arrival cities share one filler pool and
// one class, so only the surrounding cue words tell them apart; several city
// names are five or six words long, which puts the cue outside narrow word
// windows in the middle of the name. Each city slot has cue words on both
// sides that never occur next to the other city slot.
inline const char* builtin_flights_grammar() {
  return R"(# flights: synthetic air-travel queries
slot fromloc.city city : boston | denver | dallas | atlanta | seattle | chicago | pittsburgh | oakland | new york | los angeles | san francisco | las vegas | kansas city | salt lake city | fort worth texas | st. petersburg florida | new york la guardia airport terminal | san francisco bay area international airport | washington dulles national airport east | salt lake city international airport | fort worth dallas regional metro airport | kansas city downtown municipal airport field
slot toloc.city city : boston | denver | dallas | atlanta | seattle | chicago | pittsburgh | oakland | new york | los angeles | san francisco | las vegas | kansas city | salt lake city | fort worth texas | st. petersburg florida | new york la guardia airport terminal | san francisco bay area international airport | washington dulles national airport east | salt lake city international airport | fort worth dallas regional metro airport | kansas city downtown municipal airport field
slot depart.date date : monday | tuesday | friday | tomorrow | today | next sunday | the first of may | the twenty second of june | next wednesday evening
slot depart.time time : noon | midnight | six pm | eight am | early morning | late in the evening
slot airline.name airline : delta | united | continental | american airlines | us air | delta air lines | alaska airlines
slot class.type - : first class | economy | business class | coach
frame i want to fly from {fromloc.city} to {toloc.city} on {depart.date}
frame show me flights from {fromloc.city} to {toloc.city} please
frame list {airline.name} flights arriving in {toloc.city} on {depart.date} from {fromloc.city} and back
frame from {fromloc.city} going to {toloc.city} with {airline.name}
frame is there a {class.type} flight from {fromloc.city} to {toloc.city}
frame book {airline.name} from {fromloc.city} to {toloc.city} departing {depart.date} at {depart.time}
frame what flights leave {depart.date} from {fromloc.city} and arrive in {toloc.city} at {depart.time}
frame i need a {class.type} ticket leaving {fromloc.city} going to {toloc.city} please
frame flights to {toloc.city} on {depart.date} please
frame which {airline.name} flights leave from {fromloc.city} and when
)";
}

inline RawSentence generate_sentence(const Grammar& g, Rng& rng) {
  RawSentence sent;
  const auto& frame = g.frames[rng.below(g.frames.size())];
  for (const auto& el : frame) {
    if (!el.is_slot) {
      sent.push_back({el.text, "-", "O"});
      continue;
    }
    const SlotSpec& slot = g.slots.at(el.text);
    const auto& filler = slot.fillers[rng.below(slot.fillers.size())];
    for (std::size_t i = 0; i < filler.size(); ++i) {
      sent.push_back({filler[i], slot.cls, slot.name + (i == 0 ? "-B" : "-I")});
    }
  }
  return sent;
}

struct SyntheticSplits {
  ColumnCorpus train, dev, test;
};

inline SyntheticSplits generate_synthetic_corpus(const Grammar& g, std::size_t train_size,
                                                 std::size_t dev_size, std::size_t test_size,
                                                 Rng& rng) {
  if (train_size < 1) throw ConfigError("generate_synthetic_corpus: size must be >= 1");
  SyntheticSplits out;
  for (auto* c : {&out.train, &out.dev, &out.test}) c->columns = 3;
  for (std::size_t i = 0; i < train_size; ++i) out.train.sentences.push_back(generate_sentence(g, rng));
  for (std::size_t i = 0; i < dev_size; ++i) out.dev.sentences.push_back(generate_sentence(g, rng));
  for (std::size_t i = 0; i < test_size; ++i) out.test.sentences.push_back(generate_sentence(g, rng));
  return out;
}

inline void write_synthetic_corpus(const SyntheticSplits& splits, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_column_file((dir / "train.txt").string(), splits.train);
  write_column_file((dir / "dev.txt").string(), splits.dev);
  write_column_file((dir / "test.txt").string(), splits.test);
}

}  // namespace irnn
