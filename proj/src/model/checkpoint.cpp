#include <json.hpp>

#include "rembed/model.hpp"
#include "rembed/sidecar.hpp"

namespace rembed::model {

using nlohmann::json;

namespace {

json config_to_json(const ModelConfig& cfg) {
  json j;
  j["d_model"] = cfg.d_model;
  j["n_heads"] = cfg.n_heads;
  j["ffn_dim"] = cfg.ffn_dim;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["use_layer_norm"] = cfg.use_layer_norm;
  j["use_residual"] = cfg.use_residual;
  j["layer_norm_eps"] = cfg.layer_norm_eps;
  j["seed"] = std::to_string(cfg.seed);
  json mods = json::object();
  for (const auto& [m, d] : cfg.modality_dims) mods[modality_name(m)] = d;
  j["modalities"] = mods;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.d_model = j.at("d_model").get<std::size_t>();
  cfg.n_heads = j.at("n_heads").get<std::size_t>();
  cfg.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  cfg.mlp_hidden = j.at("mlp_hidden").get<std::vector<std::size_t>>();
  cfg.use_layer_norm = j.at("use_layer_norm").get<bool>();
  cfg.use_residual = j.at("use_residual").get<bool>();
  cfg.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  cfg.seed = std::stoull(j.at("seed").get<std::string>());
  cfg.modality_dims.clear();
  for (const auto& [name, dim] : j.at("modalities").items()) {
    cfg.modality_dims[parse_modality(name)] = dim.get<std::size_t>();
  }
  return cfg;
}

}  // namespace

void save_checkpoint(const Model& model, const LossWeights& lambda,
                     const std::filesystem::path& json_path) {
  const auto bin_path = dataio::sidecar_path_for(json_path);
  json params = json::array();
  {
    dataio::SidecarWriter writer(bin_path);
    const auto& names = model.parameter_names();
    const auto& tensors = model.parameters();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      std::vector<std::uint32_t> dims;
      for (std::size_t d : tensors[i].shape()) dims.push_back(static_cast<std::uint32_t>(d));
      const std::uint64_t off = writer.append(dims, tensors[i].values());
      params.push_back({{"name", names[i]}, {"offset", off}, {"dims", dims}});
    }
    writer.commit();
  }

  json j;
  j["format"] = "rembed-checkpoint";
  j["config"] = config_to_json(model.config());
  j["lambda"] = {{"bce", lambda.bce}, {"mse", lambda.mse}, {"f1", lambda.f1}};
  j["params"] = params;
  j["sidecar"] = bin_path.filename().string();
  j["sidecar_checksum"] = std::to_string(dataio::fnv1a_file(bin_path));
  dataio::write_file_atomic(json_path, j.dump(2) + "\n");
}

Model load_checkpoint(const std::filesystem::path& json_path, LossWeights* lambda_out) {
  json j;
  try {
    j = json::parse(dataio::read_file(json_path));
  } catch (const json::parse_error& e) {
    throw SchemaError("checkpoint: malformed JSON in " + json_path.string() + ": " + e.what());
  }
  try {
    if (j.at("format") != "rembed-checkpoint") {
      throw SchemaError("checkpoint: unknown format in " + json_path.string());
    }
    const auto bin_path = json_path.parent_path() / j.at("sidecar").get<std::string>();
    const std::uint64_t expect = std::stoull(j.at("sidecar_checksum").get<std::string>());
    const std::uint64_t actual = dataio::fnv1a_file(bin_path);
    if (expect != actual) {
      throw SchemaError("checkpoint: sidecar checksum mismatch for " + bin_path.string());
    }

    Model model(config_from_json(j.at("config")));
    if (lambda_out != nullptr) {
      lambda_out->bce = j.at("lambda").at("bce").get<double>();
      lambda_out->mse = j.at("lambda").at("mse").get<double>();
      lambda_out->f1 = j.at("lambda").at("f1").get<double>();
    }

    dataio::SidecarReader reader(bin_path);
    for (const auto& pj : j.at("params")) {
      const std::string name = pj.at("name").get<std::string>();
      const auto rec = reader.read_at(pj.at("offset").get<std::uint64_t>());
      auto& tensor = model.parameter(name);
      numcore::Shape shape;
      for (std::uint32_t d : rec.dims) shape.push_back(d);
      if (shape != tensor.shape()) {
        throw SchemaError("checkpoint: parameter '" + name + "' has shape " +
                          numcore::shape_str(shape) + ", expected " +
                          numcore::shape_str(tensor.shape()));
      }
      tensor.values() = rec.payload;
    }
    return model;
  } catch (const json::exception& e) {
    throw SchemaError("checkpoint: bad header in " + json_path.string() + ": " + e.what());
  }
}

}  // namespace rembed::model
