#include "sag/checkpoint.hpp"

#include <fstream>
#include <utility>

#include <json.hpp>

#include "sag/errors.hpp"

namespace sag {

namespace {

// Insertion-ordered JSON keeps serialization deterministic: the same
// checkpoint always produces the same bytes.
using Json = nlohmann::ordered_json;

constexpr int kFormatVersion = 1;

Json tensor_to_json(const std::string& name, const Tensor& t) {
    Json j;
    j["name"] = name;
    j["rows"] = t.rows();
    j["cols"] = t.cols();
    Json data = Json::array();
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) data.push_back(t(r, c));
    }
    j["data"] = std::move(data);
    return j;
}

NamedTensor tensor_from_json(const Json& j) {
    NamedTensor out;
    out.name = j.at("name").get<std::string>();
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    const Json& data = j.at("data");
    if (data.size() != rows * cols) {
        throw DataError("checkpoint tensor '" + out.name + "': " +
                        std::to_string(data.size()) + " values for shape " +
                        std::to_string(rows) + "x" + std::to_string(cols));
    }
    out.value = Tensor(rows, cols);
    std::size_t i = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out.value(r, c) = data[i++].get<double>();
        }
    }
    if (!out.value.all_finite()) {
        throw DataError("checkpoint tensor '" + out.name +
                        "' holds non-finite values");
    }
    return out;
}

Json params_to_json(const std::vector<NamedTensor>& params) {
    Json arr = Json::array();
    for (const NamedTensor& p : params) {
        arr.push_back(tensor_to_json(p.name, p.value));
    }
    return arr;
}

std::vector<NamedTensor> params_from_json(const Json& arr) {
    std::vector<NamedTensor> out;
    for (const Json& j : arr) out.push_back(tensor_from_json(j));
    return out;
}

}  // namespace

std::vector<NamedTensor> snapshot_params(
    const std::vector<const Parameter*>& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.size());
    for (const Parameter* p : params) out.push_back({p->name, p->value});
    return out;
}

void restore_params(const std::vector<Parameter*>& params,
                    const std::vector<NamedTensor>& stored) {
    if (params.size() != stored.size()) {
        throw DataError("checkpoint holds " + std::to_string(stored.size()) +
                        " tensors, model expects " +
                        std::to_string(params.size()));
    }
    for (Parameter* p : params) {
        const NamedTensor* found = nullptr;
        for (const NamedTensor& s : stored) {
            if (s.name == p->name) {
                found = &s;
                break;
            }
        }
        if (found == nullptr) {
            throw DataError("checkpoint is missing tensor '" + p->name + "'");
        }
        if (!found->value.same_shape(p->value)) {
            throw DataError("checkpoint tensor '" + p->name + "' is " +
                            found->value.shape_str() + ", model expects " +
                            p->value.shape_str());
        }
        p->value = found->value;
        p->grad = Tensor();
    }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    Json j;
    j["format_version"] = kFormatVersion;
    j["variant"] = ck.variant;
    j["seed"] = ck.seed;

    Json model;
    model["hidden_dim"] = ck.model_config.hidden_dim;
    model["input_dim"] = ck.model_config.input_dim;
    model["meta_dim"] = ck.model_config.meta_dim;
    model["release_layers"] = ck.model_config.release_layers;
    model["filter_layers"] = ck.model_config.filter_layers;
    model["use_flow_temperature"] = ck.model_config.use_flow_temperature;
    j["model_config"] = std::move(model);

    Json train;
    train["learning_rate"] = ck.train_config.learning_rate;
    train["adam_beta1"] = ck.train_config.adam_beta1;
    train["adam_beta2"] = ck.train_config.adam_beta2;
    train["adam_epsilon"] = ck.train_config.adam_epsilon;
    train["epochs"] = ck.train_config.epochs;
    train["bptt_window"] = ck.train_config.bptt_window;
    train["seed"] = ck.train_config.seed;
    train["train_fraction"] = ck.train_config.train_fraction;
    j["train_config"] = std::move(train);

    Json stats;
    stats["mean"] = ck.driver_stats.mean;
    stats["stddev"] = ck.driver_stats.stddev;
    j["driver_stats"] = std::move(stats);

    j["use_data_release"] = ck.use_data_release;
    j["main_params"] = params_to_json(ck.main_params);
    j["forecaster_params"] = params_to_json(ck.forecaster_params);

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open checkpoint for writing: " + path.string());
    }
    out << j.dump(1) << "\n";
    out.close();
    if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw DataError("checkpoint " + path.string() +
                        " is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != kFormatVersion) {
            throw DataError("checkpoint " + path.string() +
                            " has unsupported format_version");
        }
        Checkpoint ck;
        ck.variant = j.at("variant").get<std::string>();
        ck.seed = j.at("seed").get<std::uint64_t>();

        const Json& model = j.at("model_config");
        ck.model_config.hidden_dim = model.at("hidden_dim").get<int>();
        ck.model_config.input_dim = model.at("input_dim").get<int>();
        ck.model_config.meta_dim = model.at("meta_dim").get<int>();
        ck.model_config.release_layers = model.at("release_layers").get<int>();
        ck.model_config.filter_layers = model.at("filter_layers").get<int>();
        ck.model_config.use_flow_temperature =
            model.at("use_flow_temperature").get<bool>();
        ck.model_config.validate();

        const Json& train = j.at("train_config");
        ck.train_config.learning_rate = train.at("learning_rate").get<double>();
        ck.train_config.adam_beta1 = train.at("adam_beta1").get<double>();
        ck.train_config.adam_beta2 = train.at("adam_beta2").get<double>();
        ck.train_config.adam_epsilon = train.at("adam_epsilon").get<double>();
        ck.train_config.epochs = train.at("epochs").get<int>();
        ck.train_config.bptt_window = train.at("bptt_window").get<int>();
        ck.train_config.seed = train.at("seed").get<std::uint64_t>();
        ck.train_config.train_fraction =
            train.at("train_fraction").get<double>();
        ck.train_config.validate();

        const Json& stats = j.at("driver_stats");
        ck.driver_stats.mean = stats.at("mean").get<std::vector<double>>();
        ck.driver_stats.stddev = stats.at("stddev").get<std::vector<double>>();
        if (ck.driver_stats.mean.size() != ck.driver_stats.stddev.size()) {
            throw DataError("checkpoint driver statistics are inconsistent");
        }

        ck.use_data_release =
            j.at("use_data_release").get<std::vector<std::uint8_t>>();
        ck.main_params = params_from_json(j.at("main_params"));
        ck.forecaster_params = params_from_json(j.at("forecaster_params"));
        return ck;
    } catch (const Json::exception& e) {
        throw DataError("checkpoint " + path.string() +
                        " is malformed: " + e.what());
    }
}

}  // namespace sag
