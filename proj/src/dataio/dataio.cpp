#include "rembed/dataio.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <variant>

#include <json.hpp>

#include "rembed/features.hpp"
#include "rembed/rng.hpp"
#include "rembed/sidecar.hpp"

namespace rembed::dataio {

using nlohmann::json;

const char* label_name(Label l) { return l == Label::HRW ? "HRW" : "LRW"; }

Label parse_label(const std::string& s) {
  if (s == "HRW") return Label::HRW;
  if (s == "LRW") return Label::LRW;
  throw SchemaError("field 'label': expected \"HRW\" or \"LRW\", got \"" + s + "\"");
}

std::size_t SentenceRecord::valid_count() const {
  std::size_t n = 0;
  for (const auto& w : words) n += w.valid ? 1 : 0;
  return n;
}

const SentenceRecord* Dataset::find(const std::string& subject, int sentence_id) const {
  auto it = std::lower_bound(
      sentences.begin(), sentences.end(), std::pair{subject, sentence_id},
      [](const SentenceRecord& r, const std::pair<std::string, int>& key) {
        return std::tie(r.subject, r.sentence_id) < std::tie(key.first, key.second);
      });
  if (it == sentences.end() || it->subject != subject || it->sentence_id != sentence_id) {
    return nullptr;
  }
  return &*it;
}

std::vector<std::string> Dataset::subjects() const {
  std::vector<std::string> out;
  for (const auto& s : sentences) {
    if (out.empty() || out.back() != s.subject) out.push_back(s.subject);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t Dataset::valid_samples() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.valid_count();
  return n;
}

const WordSample& sample_at(const Dataset& ds, const SampleId& id) {
  const SentenceRecord* rec = ds.find(id.subject, id.sentence_id);
  require(rec != nullptr, "sample_at: unknown sentence " + id.subject + "/" +
                              std::to_string(id.sentence_id));
  require(id.word_index >= 0 && static_cast<std::size_t>(id.word_index) < rec->words.size(),
          "sample_at: word index out of range");
  return rec->words[static_cast<std::size_t>(id.word_index)];
}

std::vector<SampleId> valid_sample_ids(const Dataset& ds) {
  std::vector<SampleId> out;
  for (const auto& s : ds.sentences) {
    for (const auto& w : s.words) {
      if (w.valid) out.push_back({s.subject, s.sentence_id, w.word_index});
    }
  }
  return out;
}

std::vector<SampleId> valid_sample_ids(const Dataset& ds, const std::string& subject) {
  std::vector<SampleId> out;
  for (const auto& s : ds.sentences) {
    if (s.subject != subject) continue;
    for (const auto& w : s.words) {
      if (w.valid) out.push_back({s.subject, s.sentence_id, w.word_index});
    }
  }
  return out;
}

std::vector<SampleId> downsample_balance(const Dataset& ds, std::vector<SampleId> ids,
                                         std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  std::vector<SampleId> hrw, lrw;
  for (const auto& id : ids) {
    (sample_at(ds, id).label == Label::HRW ? hrw : lrw).push_back(id);
  }
  require(!hrw.empty(), "downsample_balance: no HRW samples");
  auto& minority = hrw.size() <= lrw.size() ? hrw : lrw;
  auto& majority = hrw.size() <= lrw.size() ? lrw : hrw;
  if (minority.size() != majority.size()) {
    Rng rng(seed);
    rng.shuffle(majority);
    majority.resize(minority.size());
  }
  std::vector<SampleId> out;
  out.reserve(minority.size() * 2);
  out.insert(out.end(), hrw.begin(), hrw.end());
  out.insert(out.end(), lrw.begin(), lrw.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::vector<SampleId>> FoldSplit::folds() const {
  std::vector<std::vector<SampleId>> out(static_cast<std::size_t>(fold_count));
  for (const auto& [id, f] : assignments) {
    out[static_cast<std::size_t>(f)].push_back(id);
  }
  return out;
}

FoldSplit kfold_split(std::vector<SampleId> ids, int k, std::uint64_t seed) {
  require(k >= 1, "kfold_split: fold count must be positive");
  std::sort(ids.begin(), ids.end());
  require(ids.size() >= static_cast<std::size_t>(k),
          "kfold_split: fewer samples (" + std::to_string(ids.size()) + ") than folds (" +
              std::to_string(k) + ")");
  Rng rng(seed);
  rng.shuffle(ids);

  FoldSplit fs;
  fs.fold_count = k;
  const std::size_t n = ids.size();
  const std::size_t q = n / static_cast<std::size_t>(k);
  const std::size_t r = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = q + (static_cast<std::size_t>(f) < r ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) {
      fs.assignments.emplace(ids[pos + i], f);
    }
    pos += size;
  }
  return fs;
}

FoldSplit kfold_split_sentences(std::vector<SampleId> ids, int k, std::uint64_t seed) {
  require(k >= 1, "kfold_split_sentences: fold count must be positive");
  std::sort(ids.begin(), ids.end());
  std::vector<std::pair<std::string, int>> groups;
  for (const auto& id : ids) {
    if (groups.empty() || groups.back() != std::pair{id.subject, id.sentence_id}) {
      groups.emplace_back(id.subject, id.sentence_id);
    }
  }
  require(groups.size() >= static_cast<std::size_t>(k),
          "kfold_split_sentences: fewer sentences than folds");
  Rng rng(seed);
  rng.shuffle(groups);

  std::map<std::pair<std::string, int>, int> group_fold;
  const std::size_t n = groups.size();
  const std::size_t q = n / static_cast<std::size_t>(k);
  const std::size_t r = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = q + (static_cast<std::size_t>(f) < r ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) group_fold[groups[pos + i]] = f;
    pos += size;
  }

  FoldSplit fs;
  fs.fold_count = k;
  for (const auto& id : ids) {
    fs.assignments.emplace(id, group_fold.at({id.subject, id.sentence_id}));
  }
  return fs;
}

void apply_zero_fixation_mask(Dataset& ds) {
  auto all_zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  for (auto& s : ds.sentences) {
    for (std::size_t i = 0; i < s.words.size(); ++i) {
      auto& w = s.words[i];
      if (w.valid && !w.is_padding && all_zero(w.eye) && all_zero(w.eeg)) {
        w.valid = false;
        s.mask[i] = 0;
      }
    }
  }
}

void normalize_eye_features(Dataset& ds) {
  std::vector<double> column;
  for (auto& s : ds.sentences) {
    const std::size_t m = s.words.size();
    for (std::size_t f = 0; f < features::kEyeFeatureCount; ++f) {
      column.resize(m);
      for (std::size_t i = 0; i < m; ++i) column[i] = s.words[i].eye[f];
      const auto normed = features::l1_normalize_per_sentence(column);
      for (std::size_t i = 0; i < m; ++i) s.words[i].eye[f] = normed[i];
    }
  }
}

// ---------------------------------------------------------------------------
// JSONL + sidecar serialization
// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_double_array(std::string& out, const std::vector<double>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt_double(v[i]);
  }
  out += ']';
}

struct PendingEeg {
  // exactly one of these is meaningful
  std::vector<double> inline_values;
  std::uint64_t ref = 0;
  bool has_ref = false;
  bool is_null = false;
};

struct ParsedLine {
  WordSample word;
  PendingEeg eeg;
  std::size_t line_no = 0;
};

[[noreturn]] void schema_fail(const std::string& field, const std::string& what,
                              std::size_t line_no) {
  throw SchemaError("field '" + field + "': " + what + " (line " +
                    std::to_string(line_no) + ")");
}

const json& get_field(const json& j, const char* key, std::size_t line_no) {
  auto it = j.find(key);
  if (it == j.end()) schema_fail(key, "missing", line_no);
  return *it;
}

std::string get_string(const json& j, const char* key, std::size_t line_no) {
  const json& f = get_field(j, key, line_no);
  if (!f.is_string()) schema_fail(key, "expected a string", line_no);
  return f.get<std::string>();
}

int get_int(const json& j, const char* key, std::size_t line_no) {
  const json& f = get_field(j, key, line_no);
  if (!f.is_number_integer()) schema_fail(key, "expected an integer", line_no);
  return f.get<int>();
}

bool get_bool(const json& j, const char* key, std::size_t line_no) {
  const json& f = get_field(j, key, line_no);
  if (!f.is_boolean()) schema_fail(key, "expected a boolean", line_no);
  return f.get<bool>();
}

std::vector<double> number_array(const json& f, const char* key, std::size_t line_no) {
  if (!f.is_array()) schema_fail(key, "expected an array of numbers", line_no);
  std::vector<double> out;
  out.reserve(f.size());
  for (const auto& e : f) {
    if (!e.is_number()) schema_fail(key, "expected an array of numbers", line_no);
    out.push_back(e.get<double>());
  }
  return out;
}

ParsedLine parse_sample_line(const json& j, std::size_t line_no) {
  ParsedLine p;
  p.line_no = line_no;
  p.word.subject = get_string(j, "subject", line_no);
  p.word.sentence_id = get_int(j, "sentence", line_no);
  p.word.word_index = get_int(j, "word", line_no);
  if (p.word.word_index < 0) schema_fail("word", "must be nonnegative", line_no);
  p.word.token = get_string(j, "token", line_no);
  try {
    p.word.label = parse_label(get_string(j, "label", line_no));
  } catch (const SchemaError& e) {
    throw SchemaError(std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
  }
  p.word.valid = get_bool(j, "valid", line_no);

  p.word.eye = number_array(get_field(j, "eye", line_no), "eye", line_no);
  if (p.word.eye.size() != features::kEyeFeatureCount) {
    schema_fail("eye", "expected " + std::to_string(features::kEyeFeatureCount) +
                           " floats, got " + std::to_string(p.word.eye.size()),
                line_no);
  }
  for (double v : p.word.eye) {
    if (v < 0.0) schema_fail("eye", "negative value", line_no);
  }

  const json& eeg = get_field(j, "eeg", line_no);
  if (eeg.is_null()) {
    p.eeg.is_null = true;
  } else if (eeg.is_object()) {
    auto it = eeg.find("ref");
    if (it == eeg.end() || !it->is_number_unsigned()) {
      schema_fail("eeg", "ref object must carry an unsigned \"ref\" offset", line_no);
    }
    p.eeg.has_ref = true;
    p.eeg.ref = it->get<std::uint64_t>();
  } else {
    p.eeg.inline_values = number_array(eeg, "eeg", line_no);
  }

  if (auto it = j.find("wemb"); it != j.end() && !it->is_null()) {
    p.word.wemb = number_array(*it, "wemb", line_no);
  }
  return p;
}

// Converts a raw sidecar record (rank-2 C x T, or rank-3 F x C x T) into a
// conditional-entropy feature vector.
std::vector<double> convert_raw_record(const SidecarReader::Record& rec, unsigned bins,
                                       unsigned& channels_out, std::size_t line_no) {
  auto check_channels = [&](std::uint32_t c) {
    if (c < 2) schema_fail("eeg", "raw matrix needs at least 2 channels", line_no);
    if (channels_out == 0) {
      channels_out = c;
    } else if (channels_out != c) {
      schema_fail("eeg", "inconsistent raw channel count " + std::to_string(c) + " vs " +
                             std::to_string(channels_out),
                  line_no);
    }
  };

  if (rec.dims.size() == 2) {
    check_channels(rec.dims[0]);
    features::EEGEpoch epoch{rec.dims[0], rec.dims[1], rec.payload};
    return features::ce_feature_vector(epoch, bins).values;
  }
  if (rec.dims.size() == 3) {
    check_channels(rec.dims[1]);
    const std::size_t fixations = rec.dims[0];
    const std::size_t c = rec.dims[1], t = rec.dims[2];
    std::vector<std::vector<double>> per_fixation;
    per_fixation.reserve(fixations);
    for (std::size_t f = 0; f < fixations; ++f) {
      features::EEGEpoch epoch{
          c, t,
          std::vector<double>(rec.payload.begin() + static_cast<std::ptrdiff_t>(f * c * t),
                              rec.payload.begin() +
                                  static_cast<std::ptrdiff_t>((f + 1) * c * t))};
      per_fixation.push_back(features::ce_feature_vector(epoch, bins).values);
    }
    return features::aggregate_fixations(per_fixation, features::ce_vector_length(c));
  }
  schema_fail("eeg", "sidecar record has unsupported rank " +
                         std::to_string(rec.dims.size()),
              line_no);
}

}  // namespace

std::filesystem::path sidecar_path_for(const std::filesystem::path& jsonl_path) {
  std::filesystem::path p = jsonl_path;
  p.replace_extension(".bin");
  return p;
}

Dataset load_samples(const std::filesystem::path& jsonl_path, const LoadOptions& opts) {
  std::ifstream in(jsonl_path);
  if (!in) throw IoError("cannot open dataset: " + jsonl_path.string());

  Dataset ds;
  std::vector<ParsedLine> lines;
  std::string line;
  std::size_t line_no = 0;
  bool saw_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (!j.is_object()) throw ParseError("line is not a JSON object", line_no);
    if (!saw_meta && lines.empty() && j.contains("format")) {
      if (j["format"] != "rembed-dataset") {
        throw SchemaError("unknown dataset format " + j["format"].dump());
      }
      ds.eeg_channels = j.value("eeg_channels", 0u);
      ds.eeg_bins = j.value("eeg_bins", 0u);
      saw_meta = true;
      continue;
    }
    lines.push_back(parse_sample_line(j, line_no));
  }

  // Resolve EEG payloads; raw matrices are converted here.
  std::unique_ptr<SidecarReader> sidecar;
  unsigned raw_channels = 0;
  bool converted_raw = false;
  for (auto& p : lines) {
    if (!p.eeg.has_ref) continue;
    if (!sidecar) sidecar = std::make_unique<SidecarReader>(sidecar_path_for(jsonl_path));
    const auto rec = sidecar->read_at(p.eeg.ref);
    if (rec.dims.size() == 1) {
      p.eeg.inline_values = rec.payload;
    } else {
      p.eeg.inline_values = convert_raw_record(rec, opts.bins, raw_channels, p.line_no);
      converted_raw = true;
    }
    p.eeg.has_ref = false;
  }
  if (converted_raw) {
    ds.eeg_channels = raw_channels;
    ds.eeg_bins = opts.bins;
  }

  // Consistent dimensions across the corpus.
  for (const auto& p : lines) {
    if (p.eeg.is_null) continue;
    if (ds.eeg_dim == 0) {
      ds.eeg_dim = p.eeg.inline_values.size();
    } else if (ds.eeg_dim != p.eeg.inline_values.size()) {
      schema_fail("eeg", "inconsistent dimension " + std::to_string(p.eeg.inline_values.size()) +
                             " vs " + std::to_string(ds.eeg_dim),
                  p.line_no);
    }
  }
  for (const auto& p : lines) {
    if (p.word.wemb.empty()) continue;
    if (ds.wemb_dim == 0) {
      ds.wemb_dim = p.word.wemb.size();
    } else if (ds.wemb_dim != p.word.wemb.size()) {
      schema_fail("wemb", "inconsistent dimension " + std::to_string(p.word.wemb.size()) +
                              " vs " + std::to_string(ds.wemb_dim),
                  p.line_no);
    }
  }

  // Group into sentences and compute the corpus maximum M.
  std::map<std::pair<std::string, int>, std::vector<ParsedLine>> groups;
  for (auto& p : lines) {
    auto& vec = groups[{p.word.subject, p.word.sentence_id}];
    for (const auto& other : vec) {
      if (other.word.word_index == p.word.word_index) {
        schema_fail("word", "duplicate word index " + std::to_string(p.word.word_index),
                    p.line_no);
      }
    }
    vec.push_back(std::move(p));
  }
  std::size_t m = 0;
  for (const auto& [key, vec] : groups) {
    for (const auto& p : vec) {
      m = std::max(m, static_cast<std::size_t>(p.word.word_index) + 1);
    }
  }
  ds.max_words = m;

  for (auto& [key, vec] : groups) {
    SentenceRecord rec;
    rec.subject = key.first;
    rec.sentence_id = key.second;
    rec.words.resize(m);
    rec.mask.assign(m, 0);
    for (std::size_t i = 0; i < m; ++i) {
      auto& w = rec.words[i];
      w.subject = rec.subject;
      w.sentence_id = rec.sentence_id;
      w.word_index = static_cast<int>(i);
      w.is_padding = true;
      w.eye.assign(features::kEyeFeatureCount, 0.0);
      w.eeg.assign(ds.eeg_dim, 0.0);
      if (ds.wemb_dim > 0) w.wemb.assign(ds.wemb_dim, 0.0);
    }
    for (auto& p : vec) {
      auto& w = rec.words[static_cast<std::size_t>(p.word.word_index)];
      w = std::move(p.word);
      w.is_padding = false;
      if (p.eeg.is_null) {
        w.eeg.assign(ds.eeg_dim, 0.0);
      } else {
        w.eeg = std::move(p.eeg.inline_values);
      }
      if (w.wemb.empty() && ds.wemb_dim > 0) w.wemb.assign(ds.wemb_dim, 0.0);
      rec.mask[static_cast<std::size_t>(w.word_index)] = w.valid ? 1 : 0;
    }
    ds.sentences.push_back(std::move(rec));
  }
  // std::map iteration already gave canonical (subject, sentence) order.
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& jsonl_path,
                  const SaveOptions& opts) {
  const bool use_sidecar = !opts.eeg_inline && ds.eeg_dim > 0;
  std::unique_ptr<SidecarWriter> sidecar;
  if (use_sidecar) sidecar = std::make_unique<SidecarWriter>(sidecar_path_for(jsonl_path));

  const std::filesystem::path tmp = jsonl_path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());

    json meta;
    meta["format"] = "rembed-dataset";
    meta["eeg_dim"] = ds.eeg_dim;
    meta["wemb_dim"] = ds.wemb_dim;
    meta["eeg_channels"] = ds.eeg_channels;
    meta["eeg_bins"] = ds.eeg_bins;
    out << meta.dump() << '\n';

    std::string line;
    for (const auto& s : ds.sentences) {
      for (const auto& w : s.words) {
        if (w.is_padding) continue;
        line.clear();
        line += "{\"subject\":" + json(w.subject).dump();
        line += ",\"sentence\":" + std::to_string(w.sentence_id);
        line += ",\"word\":" + std::to_string(w.word_index);
        line += ",\"token\":" + json(w.token).dump();
        line += ",\"label\":\"";
        line += label_name(w.label);
        line += "\",\"valid\":";
        line += w.valid ? "true" : "false";
        line += ",\"eye\":";
        append_double_array(line, w.eye);
        line += ",\"eeg\":";
        if (ds.eeg_dim == 0) {
          line += "null";
        } else if (use_sidecar) {
          const std::uint32_t dim = static_cast<std::uint32_t>(w.eeg.size());
          const std::uint64_t off = sidecar->append(std::span{&dim, 1}, w.eeg);
          line += "{\"ref\":" + std::to_string(off) + "}";
        } else {
          append_double_array(line, w.eeg);
        }
        line += ",\"wemb\":";
        if (w.wemb.empty()) {
          line += "null";
        } else {
          append_double_array(line, w.wemb);
        }
        line += "}";
        out << line << '\n';
      }
    }
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  if (sidecar) sidecar->commit();
  std::filesystem::rename(tmp, jsonl_path);
}

}  // namespace rembed::dataio
