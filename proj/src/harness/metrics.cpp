#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "rembed/harness.hpp"
#include "rembed/sidecar.hpp"
#include "rembed/tensor.hpp"

namespace rembed::harness {

using nlohmann::json;

namespace {

json roc_points_json(const std::vector<RocPoint>& roc) {
  json arr = json::array();
  for (const auto& pt : roc) {
    arr.push_back({{"threshold", std::isinf(pt.threshold) ? json() : json(pt.threshold)},
                   {"fpr", pt.fpr},
                   {"tpr", pt.tpr}});
  }
  return arr;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string metrics_to_json(const MetricsReport& report, const std::string& config_echo_json) {
  json j;
  j["config"] = config_echo_json.empty() ? json::object() : json::parse(config_echo_json);
  json subjects = json::object();
  for (const auto& sm : report.subjects) {
    json folds = json::array();
    for (const auto& fm : sm.folds) {
      folds.push_back({{"fold", fm.fold},
                       {"accuracy", fm.accuracy},
                       {"auc", fm.auc},
                       {"tp", fm.tp},
                       {"fp", fm.fp},
                       {"tn", fm.tn},
                       {"fn", fm.fn},
                       {"n_test", fm.tp + fm.fp + fm.tn + fm.fn}});
    }
    subjects[sm.subject] = {{"folds", folds},
                            {"mean_accuracy", sm.mean_accuracy},
                            {"auc", sm.auc},
                            {"roc", roc_points_json(sm.roc)}};
  }
  j["subjects"] = subjects;
  j["overall"] = {{"mean_accuracy", report.mean_accuracy},
                  {"mean_auc", report.mean_auc},
                  {"subject_count", report.subjects.size()}};
  return j.dump(2) + "\n";
}

std::string roc_csv(const MetricsReport& report) {
  std::string out = "subject,threshold,fpr,tpr\n";
  for (const auto& sm : report.subjects) {
    for (const auto& pt : sm.roc) {
      out += sm.subject;
      out += ',';
      out += fmt_double(pt.threshold);
      out += ',';
      out += fmt_double(pt.fpr);
      out += ',';
      out += fmt_double(pt.tpr);
      out += '\n';
    }
  }
  return out;
}

void export_embeddings(const model::Model& m, const dataio::Dataset& ds,
                       const std::filesystem::path& manifest_path) {
  const std::size_t d = m.config().d_model;
  std::vector<double> rows;
  json manifest_rows = json::array();
  numcore::Tape tape;
  for (const auto& sent : ds.sentences) {
    if (sent.valid_count() == 0) continue;
    tape.clear();
    const auto bp = m.forward_sentence(tape, sent);
    for (std::size_t w = 0; w < sent.words.size(); ++w) {
      if (!sent.mask[w]) continue;
      const double* row = bp.encoder_out.values().data() + w * d;
      rows.insert(rows.end(), row, row + d);
      manifest_rows.push_back({{"subject", sent.subject},
                               {"sentence", sent.sentence_id},
                               {"word", sent.words[w].word_index},
                               {"token", sent.words[w].token},
                               {"label", dataio::label_name(sent.words[w].label)}});
    }
  }
  tape.clear();
  const std::size_t count = rows.size() / d;
  require(count > 0, "export_embeddings: no valid words in dataset");

  const auto bin_path = dataio::sidecar_path_for(manifest_path);
  {
    dataio::SidecarWriter writer(bin_path);
    const std::uint32_t dims[2] = {static_cast<std::uint32_t>(count),
                                   static_cast<std::uint32_t>(d)};
    writer.append(dims, rows);
    writer.commit();
  }

  json manifest;
  manifest["format"] = "rembed-embeddings";
  manifest["dim"] = d;
  manifest["count"] = count;
  manifest["sidecar"] = bin_path.filename().string();
  manifest["offset"] = 0;
  manifest["rows"] = manifest_rows;
  dataio::write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

}  // namespace rembed::harness
