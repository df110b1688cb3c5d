#include "cpcfl/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "binio.hpp"

namespace cpcfl {

namespace {

using nlohmann::json;

constexpr char kCheckpointMagic[4] = {'C', 'P', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint8_t kKindEncoder = 0;
constexpr std::uint8_t kKindModel = 1;

json arch_to_json(const ArchConfig& arch) {
    return json{{"input_dim", arch.input_dim},
                {"encoder_widths", arch.encoder_widths},
                {"rep_dim", arch.rep_dim},
                {"head_hidden_layers", arch.head_hidden_layers},
                {"head_hidden_dim", arch.head_hidden_dim},
                {"class_count", arch.class_count},
                {"projector_dim", arch.projector_dim},
                {"predictor_bottleneck", arch.predictor_bottleneck}};
}

ArchConfig arch_from_json(const json& j) {
    ArchConfig arch;
    arch.input_dim = j.at("input_dim").get<std::size_t>();
    arch.encoder_widths = j.at("encoder_widths").get<std::vector<std::size_t>>();
    arch.rep_dim = j.at("rep_dim").get<std::size_t>();
    arch.head_hidden_layers = j.at("head_hidden_layers").get<int>();
    arch.head_hidden_dim = j.at("head_hidden_dim").get<std::size_t>();
    arch.class_count = j.at("class_count").get<std::size_t>();
    arch.projector_dim = j.at("projector_dim").get<std::size_t>();
    arch.predictor_bottleneck = j.at("predictor_bottleneck").get<std::size_t>();
    return arch;
}

std::uint8_t layer_kind_id(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return 0;
        case LayerKind::relu: return 1;
        case LayerKind::batchnorm: return 2;
        case LayerKind::softmax: return 3;
    }
    throw FormatError("checkpoint: unknown layer kind");
}

LayerKind layer_kind_from_id(std::uint8_t id) {
    switch (id) {
        case 0: return LayerKind::dense;
        case 1: return LayerKind::relu;
        case 2: return LayerKind::batchnorm;
        case 3: return LayerKind::softmax;
    }
    throw FormatError("checkpoint: unknown layer kind id " + std::to_string(id));
}

void write_tensor(std::ostream& out, const Tensor& t) {
    binio::write_u64(out, t.shape().size());
    for (std::size_t d : t.shape()) binio::write_u64(out, d);
    binio::write_f64_array(out, t.data(), t.size());
}

Tensor read_tensor(std::istream& in) {
    const std::uint64_t ndim = binio::read_u64(in, "checkpoint");
    std::vector<std::size_t> shape(static_cast<std::size_t>(ndim));
    for (auto& d : shape) d = static_cast<std::size_t>(binio::read_u64(in, "checkpoint"));
    Tensor t(shape);
    binio::read_f64_array(in, t.data(), t.size(), "checkpoint");
    return t;
}

void write_network(std::ostream& out, const Network& net) {
    binio::write_u32(out, static_cast<std::uint32_t>(net.layers.size()));
    for (const Layer& layer : net.layers) {
        binio::write_u8(out, layer_kind_id(layer.kind));
        binio::write_u64(out, layer.in_dim);
        binio::write_u64(out, layer.out_dim);
    }
    for (const Tensor* t : state_tensors(net)) write_tensor(out, *t);
}

Network read_network(std::istream& in) {
    Network net;
    const std::uint32_t layer_count = binio::read_u32(in, "checkpoint");
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        Layer layer;
        layer.kind = layer_kind_from_id(binio::read_u8(in, "checkpoint"));
        layer.in_dim = static_cast<std::size_t>(binio::read_u64(in, "checkpoint"));
        layer.out_dim = static_cast<std::size_t>(binio::read_u64(in, "checkpoint"));
        net.layers.push_back(std::move(layer));
    }
    for (Layer& layer : net.layers) {
        switch (layer.kind) {
            case LayerKind::dense:
                layer.weight = read_tensor(in);
                layer.bias = read_tensor(in);
                break;
            case LayerKind::batchnorm:
                layer.gamma = read_tensor(in);
                layer.beta = read_tensor(in);
                layer.running_mean = read_tensor(in);
                layer.running_var = read_tensor(in);
                break;
            default:
                break;
        }
    }
    return net;
}

void write_header(std::ostream& out, std::uint8_t kind, const ArchConfig& arch) {
    out.write(kCheckpointMagic, 4);
    binio::write_u32(out, kCheckpointVersion);
    binio::write_u8(out, kind);
    binio::write_string(out, arch_to_json(arch).dump());
}

ArchConfig read_header(std::istream& in, std::uint8_t expected_kind, const std::string& path) {
    binio::check_magic(in, kCheckpointMagic, "checkpoint");
    const std::uint32_t version = binio::read_u32(in, "checkpoint");
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const std::uint8_t kind = binio::read_u8(in, "checkpoint");
    if (kind != expected_kind) {
        throw FormatError("checkpoint: wrong kind in " + path);
    }
    try {
        return arch_from_json(json::parse(binio::read_string(in, "checkpoint")));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: bad arch header: ") + e.what());
    }
}

}  // namespace

void save_encoder_checkpoint(const std::string& path, const Network& encoder,
                             const ArchConfig& arch) {
    std::ofstream out = binio::open_output(path, "checkpoint");
    write_header(out, kKindEncoder, arch);
    write_network(out, encoder);
    if (!out) throw IoError("checkpoint: write failed for " + path);
}

std::pair<Network, ArchConfig> load_encoder_checkpoint(const std::string& path) {
    std::ifstream in = binio::open_input(path, "checkpoint");
    const ArchConfig arch = read_header(in, kKindEncoder, path);
    return {read_network(in), arch};
}

void save_model_checkpoint(const std::string& path, const ModelParams& model) {
    std::ofstream out = binio::open_output(path, "checkpoint");
    write_header(out, kKindModel, model.arch);
    std::uint8_t present = 0;
    if (model.projector) present |= 1;
    if (model.predictor) present |= 2;
    if (model.momentum_encoder) present |= 4;
    if (model.momentum_projector) present |= 8;
    binio::write_u8(out, present);
    write_network(out, model.encoder);
    write_network(out, model.classifier);
    if (model.projector) write_network(out, *model.projector);
    if (model.predictor) write_network(out, *model.predictor);
    if (model.momentum_encoder) write_network(out, *model.momentum_encoder);
    if (model.momentum_projector) write_network(out, *model.momentum_projector);
    if (!out) throw IoError("checkpoint: write failed for " + path);
}

ModelParams load_model_checkpoint(const std::string& path) {
    std::ifstream in = binio::open_input(path, "checkpoint");
    ModelParams model;
    model.arch = read_header(in, kKindModel, path);
    const std::uint8_t present = binio::read_u8(in, "checkpoint");
    model.encoder = read_network(in);
    model.classifier = read_network(in);
    if (present & 1) model.projector = read_network(in);
    if (present & 2) model.predictor = read_network(in);
    if (present & 4) model.momentum_encoder = read_network(in);
    if (present & 8) model.momentum_projector = read_network(in);
    return model;
}

}  // namespace cpcfl
