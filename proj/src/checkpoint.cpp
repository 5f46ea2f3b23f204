#include "fpk/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace fpk {

using nlohmann::json;

namespace {

json spec_to_json(const MlpSpec& spec) {
  return json{{"widths", spec.widths}, {"activation", to_string(spec.hidden)}};
}

MlpSpec spec_from_json(const json& j) {
  MlpSpec spec;
  spec.widths = j.at("widths").get<std::vector<int>>();
  spec.hidden = activation_from_string(j.at("activation").get<std::string>());
  spec.validate();
  return spec;
}

void append_params(std::vector<double>& blob, const MlpParams& params) {
  const std::vector<double> flat = flatten(params);
  blob.insert(blob.end(), flat.begin(), flat.end());
}

// Little-endian write of a double array. The build targets little-endian
// hosts; the static_assert below keeps that honest.
static_assert(std::endian::native == std::endian::little,
              "checkpoint blob assumes a little-endian host");

}  // namespace

const Net& Checkpoint::require_generator() const {
  if (!generator.has_value()) {
    throw PreconditionError("checkpoint has no generator (EBM mode)");
  }
  return *generator;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json header;
  header["format"] = "fpk-checkpoint";
  header["version"] = ckpt.version;
  header["latent_dim"] = ckpt.latent_dim;
  if (ckpt.generator.has_value() && !ckpt.generator->identity) {
    header["generator"] = spec_to_json(ckpt.generator->spec);
  } else {
    header["generator"] = nullptr;
  }
  header["feature"] = spec_to_json(ckpt.feature.spec);
  header["metadata"] = ckpt.metadata;

  std::vector<double> blob;
  if (ckpt.generator.has_value() && !ckpt.generator->identity) {
    append_params(blob, ckpt.generator->params);
  }
  append_params(blob, ckpt.feature.params);
  header["parameter_count"] = blob.size();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open '" + path + "'");
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size() * sizeof(double)));
  if (!out) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw IoError("load_checkpoint: '" + path + "': missing header line");
  }
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::parse_error& e) {
    throw IoError("load_checkpoint: '" + path + "': header parse error at byte " +
                  std::to_string(e.byte) + ": " + e.what());
  }
  if (header.value("format", "") != "fpk-checkpoint") {
    throw IoError("load_checkpoint: '" + path + "' is not an fpk checkpoint");
  }
  const int version = header.at("version").get<int>();
  if (version != Checkpoint::kFormatVersion) {
    throw IoError("load_checkpoint: unsupported version " +
                  std::to_string(version) + " (this build reads version " +
                  std::to_string(Checkpoint::kFormatVersion) + ")");
  }

  Checkpoint ckpt;
  ckpt.version = version;
  ckpt.latent_dim = header.at("latent_dim").get<int>();
  ckpt.metadata =
      header.at("metadata").get<std::map<std::string, std::string>>();

  const std::size_t count = header.at("parameter_count").get<std::size_t>();
  std::vector<double> blob(count);
  in.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) {
    throw IoError("load_checkpoint: '" + path + "': truncated parameter blob at byte " +
                  std::to_string(header_line.size() + 1 +
                                 static_cast<std::size_t>(in.gcount())));
  }

  std::size_t pos = 0;
  auto take = [&](const MlpSpec& spec) {
    std::size_t need = 0;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
      need += static_cast<std::size_t>(spec.widths[l] + 1) *
              static_cast<std::size_t>(spec.widths[l + 1]);
    }
    if (pos + need > blob.size()) {
      throw IoError("load_checkpoint: '" + path + "': blob shorter than specs require");
    }
    std::vector<double> flat(blob.begin() + pos, blob.begin() + pos + need);
    pos += need;
    return unflatten(spec, flat);
  };

  if (!header.at("generator").is_null()) {
    const MlpSpec gspec = spec_from_json(header.at("generator"));
    ckpt.generator = Net::mlp(gspec, take(gspec));
  }
  const MlpSpec fspec = spec_from_json(header.at("feature"));
  ckpt.feature = Net::mlp(fspec, take(fspec));
  if (pos != blob.size()) {
    throw IoError("load_checkpoint: '" + path + "': trailing parameter data");
  }
  return ckpt;
}

}  // namespace fpk
