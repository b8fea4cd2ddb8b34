#include "dialogcode/transcript.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dialogcode/error.hpp"
#include "dialogcode/util.hpp"

namespace dialogcode {

using nlohmann::json;

std::optional<std::size_t> Dialogue::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (utterances[i].id == id) return i;
  }
  return std::nullopt;
}

namespace {

double get_seconds(const json& rec, const char* field, const std::string& where) {
  auto it = rec.find(field);
  if (it == rec.end()) throw MalformedDocumentError(where, std::string("missing field '") + field + "'");
  if (it->is_number()) return it->get<double>();
  if (it->is_string()) {
    try {
      std::size_t used = 0;
      const auto s = it->get<std::string>();
      double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  throw MalformedDocumentError(where, std::string("field '") + field + "' is not a number of seconds");
}

std::string get_text_field(const json& rec, const char* field, const std::string& where) {
  auto it = rec.find(field);
  if (it == rec.end()) throw MalformedDocumentError(where, std::string("missing field '") + field + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw MalformedDocumentError(where, std::string("field '") + field + "' must be a string");
}

}  // namespace

Dialogue load_transcript(std::string_view text, std::string_view default_group_id,
                         std::string_view source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw MalformedDocumentError(std::string(source), e.what());
  }

  Dialogue d;
  d.group_id = std::string(default_group_id);
  const json* records = &doc;
  if (doc.is_object()) {
    if (auto g = doc.find("group_id"); g != doc.end() && g->is_string()) d.group_id = g->get<std::string>();
    auto seg = doc.find("segments");
    if (seg == doc.end()) throw MalformedDocumentError(std::string(source), "expected a 'segments' array");
    records = &*seg;
  }
  if (!records->is_array()) throw MalformedDocumentError(std::string(source), "records must be an array");

  std::vector<std::string> problems;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < records->size(); ++i) {
    const auto where = std::string(source) + ": record " + std::to_string(i);
    const json& rec = (*records)[i];
    if (!rec.is_object()) throw MalformedDocumentError(where, "expected an object");
    Utterance u;
    u.speaker = get_text_field(rec, "speaker", where);
    u.text = get_text_field(rec, "text", where);
    u.start = get_seconds(rec, "start", where);
    u.end = get_seconds(rec, "end", where);
    u.id = rec.contains("id") ? get_text_field(rec, "id", where)
                              : d.group_id + "-" + std::to_string(i + 1);
    if (auto r = rec.find("revised_text"); r != rec.end() && r->is_string()) {
      u.revised_text = r->get<std::string>();
    }
    if (!std::isfinite(u.start) || u.start < 0) problems.push_back(where + ": start must be a non-negative number");
    if (!(u.end >= u.start)) problems.push_back(where + ": end (" + std::to_string(u.end) + ") is before start (" + std::to_string(u.start) + ")");
    if (trim(u.text).empty()) problems.push_back(where + ": text is empty");
    if (!ids.insert(u.id).second) problems.push_back(where + ": duplicate id '" + u.id + "'");
    d.utterances.push_back(std::move(u));
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));

  std::stable_sort(d.utterances.begin(), d.utterances.end(),
                   [](const Utterance& a, const Utterance& b) { return a.start < b.start; });
  return d;
}

Dialogue load_transcript_file(const std::filesystem::path& path) {
  return load_transcript(read_text_file(path), path.stem().string(), path.string());
}

std::string serialize_transcript(const Dialogue& d) {
  json doc;
  doc["group_id"] = d.group_id;
  doc["segments"] = json::array();
  for (const auto& u : d.utterances) {
    json rec{{"id", u.id}, {"speaker", u.speaker}, {"text", u.text}, {"start", u.start}, {"end", u.end}};
    if (u.revised_text) rec["revised_text"] = *u.revised_text;
    doc["segments"].push_back(std::move(rec));
  }
  return doc.dump(2);
}

std::string_view to_string(Annotator a) {
  switch (a) {
    case Annotator::kH1: return "H1";
    case Annotator::kH2: return "H2";
    case Annotator::kAdjudicated: return "adjudicated";
  }
  return "?";
}

Annotator annotator_from_string(std::string_view s) {
  const auto k = to_lower(trim(s));
  if (k == "h1") return Annotator::kH1;
  if (k == "h2") return Annotator::kH2;
  if (k == "adjudicated") return Annotator::kAdjudicated;
  throw Error("unknown annotator '" + std::string(s) + "' (expected H1, H2 or adjudicated)");
}

std::vector<GroundTruth> parse_ground_truth(std::string_view text, std::string_view source) {
  std::vector<GroundTruth> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> column;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    for (auto& c : split_csv_line(line, std::string(source) + ":" + std::to_string(line_no))) cells.push_back(trim(c));
    if (column.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) column[to_lower(cells[i])] = i;
      for (const char* required : {"utterance_id", "event", "act", "annotator"}) {
        if (!column.count(required)) {
          throw MalformedDocumentError(std::string(source) + ":" + std::to_string(line_no),
                                       std::string("header lacks column '") + required + "'");
        }
      }
      continue;
    }
    auto cell = [&](const char* name) -> const std::string& {
      const auto idx = column.at(name);
      if (idx >= cells.size()) {
        throw MalformedDocumentError(std::string(source) + ":" + std::to_string(line_no),
                                     std::string("missing value for '") + name + "'");
      }
      return cells[idx];
    };
    GroundTruth g;
    g.utterance_id = cell("utterance_id");
    g.event = cell("event");
    g.act = cell("act");
    try {
      g.annotator = annotator_from_string(cell("annotator"));
    } catch (const Error& e) {
      throw MalformedDocumentError(std::string(source) + ":" + std::to_string(line_no), e.what());
    }
    out.push_back(std::move(g));
  }
  if (column.empty()) throw MalformedDocumentError(std::string(source), "missing header row");
  return out;
}

std::vector<GroundTruth> load_ground_truth_file(const std::filesystem::path& path) {
  return parse_ground_truth(read_text_file(path), path.string());
}

std::string serialize_ground_truth(const std::vector<GroundTruth>& labels) {
  std::string out = "utterance_id,event,act,annotator\n";
  for (const auto& g : labels) {
    out += csv_quote(g.utterance_id) + "," + csv_quote(g.event) + "," + csv_quote(g.act) + "," +
           std::string(to_string(g.annotator)) + "\n";
  }
  return out;
}

std::vector<GroundTruth> LabeledDialogue::labels_for(std::string_view utterance_id) const {
  auto it = labels_.find(utterance_id);
  return it == labels_.end() ? std::vector<GroundTruth>{} : it->second;
}

std::optional<CodeLabel> LabeledDialogue::label(std::string_view utterance_id, Annotator a) const {
  auto it = labels_.find(utterance_id);
  if (it == labels_.end()) return std::nullopt;
  for (const auto& g : it->second) {
    if (g.annotator == a) return CodeLabel{g.event, g.act};
  }
  return std::nullopt;
}

LabeledDialogue attach_labels(const Dialogue& d, const std::vector<GroundTruth>& labels,
                              const Codebook& cb) {
  LabeledDialogue view;
  view.dialogue_ = &d;
  std::vector<std::string> problems;
  for (const auto& g : labels) {
    if (!d.index_of(g.utterance_id)) {
      problems.push_back("label for unknown utterance '" + g.utterance_id + "'");
      continue;
    }
    try {
      const auto label = cb.make_label(g.event, g.act);
      auto& slot = view.labels_[g.utterance_id];
      const bool dup = std::any_of(slot.begin(), slot.end(),
                                   [&](const GroundTruth& o) { return o.annotator == g.annotator; });
      if (dup) {
        problems.push_back("utterance '" + g.utterance_id + "' has two labels from " +
                           std::string(to_string(g.annotator)));
        continue;
      }
      slot.push_back({g.utterance_id, label.event, label.act, g.annotator});
    } catch (const ValidationError& e) {
      for (const auto& v : e.violations()) {
        problems.push_back("utterance '" + g.utterance_id + "': " + v);
      }
    }
  }
  if (!problems.empty()) throw ValidationError(std::move(problems));
  return view;
}

std::string_view to_string(Subset s) {
  switch (s) {
    case Subset::kValidation: return "validation";
    case Subset::kTest: return "test";
    case Subset::kRemainder: return "remainder";
    case Subset::kAll: return "all";
  }
  return "?";
}

Subset subset_from_string(std::string_view s) {
  const auto k = to_lower(s);
  if (k == "validation") return Subset::kValidation;
  if (k == "test") return Subset::kTest;
  if (k == "remainder") return Subset::kRemainder;
  if (k == "all") return Subset::kAll;
  throw Error("unknown subset '" + std::string(s) + "'");
}

bool DatasetSplit::contains(Subset s, const std::string& id) const {
  switch (s) {
    case Subset::kValidation: return validation.count(id) > 0;
    case Subset::kTest: return test.count(id) > 0;
    case Subset::kRemainder: return remainder.count(id) > 0;
    case Subset::kAll: return validation.count(id) || test.count(id) || remainder.count(id);
  }
  return false;
}

std::set<std::string> DatasetSplit::ids(Subset s) const {
  switch (s) {
    case Subset::kValidation: return validation;
    case Subset::kTest: return test;
    case Subset::kRemainder: return remainder;
    case Subset::kAll: {
      std::set<std::string> all = validation;
      all.insert(test.begin(), test.end());
      all.insert(remainder.begin(), remainder.end());
      return all;
    }
  }
  return {};
}

std::string DatasetSplit::to_json() const {
  json doc{{"seed", seed},
           {"unit", unit == SplitUnit::kUtterance ? "utterance" : "dialogue"},
           {"ratios", {{"validation", ratios.validation}, {"test", ratios.test}, {"remainder", ratios.remainder}}},
           {"validation", validation},
           {"test", test},
           {"remainder", remainder}};
  return doc.dump(2);
}

DatasetSplit DatasetSplit::from_json(std::string_view text) {
  try {
    const json doc = json::parse(text.begin(), text.end());
    DatasetSplit s;
    s.seed = doc.at("seed").get<std::uint64_t>();
    s.unit = doc.at("unit").get<std::string>() == "dialogue" ? SplitUnit::kDialogue : SplitUnit::kUtterance;
    s.ratios = {doc.at("ratios").at("validation").get<double>(), doc.at("ratios").at("test").get<double>(),
                doc.at("ratios").at("remainder").get<double>()};
    s.validation = doc.at("validation").get<std::set<std::string>>();
    s.test = doc.at("test").get<std::set<std::string>>();
    s.remainder = doc.at("remainder").get<std::set<std::string>>();
    return s;
  } catch (const json::exception& e) {
    throw MalformedDocumentError("split", e.what());
  }
}

DatasetSplit split_dataset(const std::vector<Dialogue>& dialogues, SplitRatios ratios,
                           std::uint64_t seed, SplitUnit unit) {
  const double sum = ratios.validation + ratios.test + ratios.remainder;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.validation < 0 || ratios.test < 0 || ratios.remainder < 0) {
    throw ValidationError({"split ratios must be non-negative and sum to 1"});
  }
  std::size_t n = 0;
  for (const auto& d : dialogues) n += d.utterances.size();
  if (n == 0) throw Error("cannot split an empty corpus");

  const auto n_validation = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(ratios.validation * n)));
  const auto n_test = std::min<std::size_t>(n - n_validation, static_cast<std::size_t>(std::llround(ratios.test * n)));

  DatasetSplit split;
  split.seed = seed;
  split.ratios = ratios;
  split.unit = unit;
  std::mt19937_64 rng(seed);

  auto shuffle = [&rng](auto& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_below(rng, i)]);
    }
  };

  if (unit == SplitUnit::kUtterance) {
    std::vector<const std::string*> ids;
    ids.reserve(n);
    for (const auto& d : dialogues) {
      for (const auto& u : d.utterances) ids.push_back(&u.id);
    }
    shuffle(ids);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto& target = i < n_validation ? split.validation
                     : i < n_validation + n_test ? split.test
                                                 : split.remainder;
      target.insert(*ids[i]);
    }
  } else {
    std::vector<std::size_t> order(dialogues.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order);
    for (auto idx : order) {
      auto& target = split.validation.size() < n_validation ? split.validation
                     : split.test.size() < n_test           ? split.test
                                                            : split.remainder;
      for (const auto& u : dialogues[idx].utterances) target.insert(u.id);
    }
  }
  return split;
}

}  // namespace dialogcode
