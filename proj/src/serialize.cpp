#include "ctxprobe/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "ctxprobe/errors.hpp"

namespace ctxprobe {

namespace {

std::string real17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string real6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

template <typename Range>
std::string real_array(const Range& values) {
  std::string out = "[";
  bool first = true;
  for (const double v : values) {
    if (!first) out += ", ";
    out += real17(v);
    first = false;
  }
  return out + "]";
}

}  // namespace

std::string model_to_json(const OcsvmModel& model) {
  const bool rbf = model.kernel().kind == KernelKind::rbf;
  std::string out = "{\n";
  out += "  \"kind\": \"" + std::string(rbf ? "rbf" : "linear") + "\",\n";
  out += "  \"gamma\": " + (rbf ? real17(model.kernel().gamma) : std::string("null")) + ",\n";
  out += "  \"nu\": " + real17(model.nu()) + ",\n";
  out += "  \"n_train\": " + std::to_string(model.n_train()) + ",\n";
  out += "  \"dim\": " + std::to_string(model.dim()) + ",\n";
  out += "  \"offset\": " + real17(model.offset()) + ",\n";
  out += "  \"dual_coefficients\": " + real_array(model.dual_coefficients()) + ",\n";
  out += "  \"support_vectors\": [";
  const auto& sv = model.support_vectors();
  for (std::size_t i = 0; i < sv.rows(); ++i) {
    out += (i == 0 ? "\n    " : ",\n    ") + real_array(sv.row(i));
  }
  out += "\n  ]";
  if (const auto& s = model.standardization()) {
    out += ",\n  \"standardization\": {\n    \"mean\": " + real_array(s->mean) +
           ",\n    \"std\": " + real_array(s->scale) + "\n  }";
  }
  out += "\n}\n";
  return out;
}

OcsvmModel model_from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    const std::string kind = doc.at("kind").get<std::string>();
    KernelSpec kernel;
    if (kind == "rbf") {
      kernel = KernelSpec::rbf(doc.at("gamma").get<double>());
    } else if (kind == "linear") {
      kernel = KernelSpec::linear();
    } else {
      throw FormatError("unknown kernel kind '" + kind + "'");
    }
    const auto dim = doc.at("dim").get<std::size_t>();
    const auto rows = doc.at("support_vectors").get<std::vector<std::vector<double>>>();
    Matrix sv = Matrix::from_rows(rows);
    if (!rows.empty() && sv.cols() != dim) {
      throw FormatError("support vector length does not match dim");
    }
    std::optional<Standardizer> standardization;
    if (doc.contains("standardization")) {
      const auto& s = doc.at("standardization");
      standardization = Standardizer{s.at("mean").get<std::vector<double>>(),
                                     s.at("std").get<std::vector<double>>()};
    }
    return OcsvmModel(std::move(sv), doc.at("dual_coefficients").get<std::vector<double>>(),
                      doc.at("offset").get<double>(), kernel, doc.at("nu").get<double>(),
                      doc.at("n_train").get<std::size_t>(), std::move(standardization));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model document: ") + e.what());
  } catch (const InputError& e) {
    throw FormatError(std::string("invalid model document: ") + e.what());
  }
}

nlohmann::ordered_json metrics_to_json(const EvaluationMetrics& m) {
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["auroc"] = m.auroc;
  j["auprc"] = m.auprc;
  j["tp"] = m.confusion.tp;
  j["fp"] = m.confusion.fp;
  j["fn"] = m.confusion.fn;
  j["tn"] = m.confusion.tn;
  return j;
}

std::string report_to_json(const PipelineReport& report) {
  nlohmann::ordered_json doc;
  auto layers = nlohmann::ordered_json::array();
  for (const auto& r : report.per_layer) {
    nlohmann::ordered_json item;
    item["layer"] = r.layer_index;
    item["theta"] = r.threshold.theta;
    item["tuning"] = {{"f1", r.threshold.tuning_f1},
                      {"accuracy", r.threshold.tuning_accuracy},
                      {"candidate_count", r.threshold.candidate_count}};
    item["eval"] = metrics_to_json(r.eval);
    item["support_vectors"] = r.model.support_count();
    layers.push_back(std::move(item));
  }
  doc["layers"] = std::move(layers);
  doc["best_layer"] = report.best_layer;
  doc["selection_rule"] = report.selection_rule;
  if (!report.failures.empty()) {
    auto failed = nlohmann::ordered_json::array();
    for (const auto& f : report.failures) {
      failed.push_back({{"layer", f.layer_index}, {"kind", f.kind}, {"message", f.message}});
    }
    doc["failed_layers"] = std::move(failed);
  }
  return doc.dump(2) + "\n";
}

std::string report_to_csv(const PipelineReport& report) {
  std::string out =
      "layer,theta,tuning_f1,tuning_accuracy,accuracy,precision,recall,f1,auroc,auprc\n";
  for (const auto& r : report.per_layer) {
    out += std::to_string(r.layer_index);
    for (const double v : {r.threshold.theta, r.threshold.tuning_f1,
                           r.threshold.tuning_accuracy, r.eval.accuracy, r.eval.precision,
                           r.eval.recall, r.eval.f1, r.eval.auroc, r.eval.auprc}) {
      out += ',' + real6(v);
    }
    out += '\n';
  }
  return out;
}

std::size_t best_layer_from_report(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text).at("best_layer").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed report '" + path.string() + "': " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace ctxprobe
