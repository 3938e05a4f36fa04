#include "bfl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace bfl {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering its path for diagnostics and rejecting
// keys nobody asked for.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path))
    {
        if (!node_.is_object()) {
            throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
        }
    }

    std::string path_of(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key)
    {
        seen_.insert(key);
        auto it = node_.find(key);
        return it == node_.end() ? nullptr : &*it;
    }

    template <typename T>
    void read(const std::string& key, T& out)
    {
        const json* v = find(key);
        if (v == nullptr) {
            return;
        }
        try {
            if constexpr (std::is_same_v<T, double>) {
                if (!v->is_number()) {
                    throw ConfigError(path_of(key), "expected a number");
                }
            } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
                if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
                    throw ConfigError(path_of(key), "expected a non-negative integer");
                }
            } else if constexpr (std::is_same_v<T, bool>) {
                if (!v->is_boolean()) {
                    throw ConfigError(path_of(key), "expected true or false");
                }
            }
            out = v->get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path_of(key), e.what());
        }
    }

    void read(const std::string& key, std::optional<double>& out)
    {
        const json* v = find(key);
        if (v == nullptr || v->is_null()) {
            return;
        }
        double value = 0.0;
        read(key, value);
        out = value;
    }

    template <typename Enum, typename Parser>
    void read_enum(const std::string& key, Enum& out, Parser parse)
    {
        const json* v = find(key);
        if (v == nullptr) {
            return;
        }
        if (!v->is_string()) {
            throw ConfigError(path_of(key), "expected a string");
        }
        auto parsed = parse(v->get<std::string>());
        if (!parsed) {
            throw ConfigError(path_of(key), "unknown value \"" + v->get<std::string>() + "\"");
        }
        out = *parsed;
    }

    template <typename T>
    void read_list(const std::string& key, std::vector<T>& out)
    {
        const json* v = find(key);
        if (v == nullptr) {
            return;
        }
        if (!v->is_array()) {
            throw ConfigError(path_of(key), "expected an array");
        }
        std::vector<T> values;
        for (std::size_t i = 0; i < v->size(); ++i) {
            const json& item = (*v)[i];
            const bool ok = std::is_same_v<T, double> ? item.is_number() : item.is_number_unsigned();
            if (!ok) {
                throw ConfigError(path_of(key) + "[" + std::to_string(i) + "]", "expected a number");
            }
            values.push_back(item.get<T>());
        }
        out = std::move(values);
    }

    void finish() const
    {
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            if (!seen_.contains(it.key())) {
                throw ConfigError(path_of(it.key()), "unknown field");
            }
        }
    }

private:
    const json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

std::optional<DatasetKind> parse_dataset_kind(const std::string& name)
{
    if (name == "toy") {
        return DatasetKind::toy;
    }
    if (name == "idx") {
        return DatasetKind::idx;
    }
    return std::nullopt;
}

void read_sgd(Section& parent, SgdConfig& sgd)
{
    const json* node = parent.find("sgd");
    if (node == nullptr) {
        return;
    }
    Section s(*node, parent.path_of("sgd"));
    s.read("learning_rate", sgd.learning_rate);
    s.read("momentum", sgd.momentum);
    s.read("weight_decay", sgd.weight_decay);
    s.read("nesterov", sgd.nesterov);
    s.finish();
}

void read_dataset(Section& parent, DatasetSpec& d)
{
    const json* node = parent.find("dataset");
    if (node == nullptr) {
        return;
    }
    Section s(*node, parent.path_of("dataset"));
    s.read_enum("kind", d.kind, parse_dataset_kind);
    s.read("num_classes", d.num_classes);
    s.read("train_per_class", d.train_per_class);
    s.read("test_per_class", d.test_per_class);
    s.read("radius", d.radius);
    s.read("spread", d.spread);
    s.read("train_images", d.train_images);
    s.read("train_labels", d.train_labels);
    s.read("test_images", d.test_images);
    s.read("test_labels", d.test_labels);
    s.read("test_fraction", d.test_fraction);
    s.finish();
}

void read_attack(Section& parent, AttackConfig& a)
{
    const json* node = parent.find("attack");
    if (node == nullptr) {
        return;
    }
    Section s(*node, parent.path_of("attack"));
    s.read_enum("kind", a.kind, parse_attack_kind);
    s.read("epsilon", a.epsilon);
    s.read("gamma", a.gamma);
    s.read("sigma", a.sigma);
    s.read_list("gamma_grid", a.gamma_grid);
    s.read_enum("ipm_criterion", a.ipm_criterion, parse_ipm_criterion);
    s.finish();
}

void read_aggregator(Section& parent, AggregatorConfig& a)
{
    const json* node = parent.find("aggregator");
    if (node == nullptr) {
        return;
    }
    Section s(*node, parent.path_of("aggregator"));
    s.read_enum("kind", a.kind, parse_aggregator_kind);
    s.read("beta", a.beta);
    s.read("weiszfeld_tol", a.weiszfeld_tol);
    s.read("weiszfeld_max_iter", a.weiszfeld_max_iter);
    s.finish();
}

void read_defense(Section& parent, std::optional<DefenseConfig>& out)
{
    const json* node = parent.find("defense");
    if (node == nullptr || node->is_null()) {
        out.reset();
        return;
    }
    DefenseConfig d;
    Section s(*node, parent.path_of("defense"));
    s.read("noise_dim", d.noise_dim);
    s.read("q", d.q);
    s.read_enum("filter", d.filter, parse_filter_kind);
    s.read("tau", d.tau);
    s.read_enum("metric", d.metric, parse_eval_metric);
    s.read("gen_lr", d.gen_lr);
    s.read("gen_momentum", d.gen_momentum);
    s.read("gen_max_iter", d.gen_max_iter);
    s.read("early_stop_loss", d.early_stop_loss);
    s.read("early_stop_patience", d.early_stop_patience);
    s.read("gen_batch", d.gen_batch);
    s.read("gen_hidden", d.gen_hidden);
    s.read("warm_start", d.warm_start);
    s.finish();
    out = d;
}

}  // namespace

ExperimentConfig config_from_json(const json& j)
{
    ExperimentConfig cfg;
    Section root(j, "");
    root.read("seed", cfg.seed);
    root.read("rounds", cfg.rounds);
    root.read("clients", cfg.clients);
    root.read("sampled_per_round", cfg.sampled_per_round);
    root.read("local_epochs", cfg.local_epochs);
    root.read("batch", cfg.batch);
    read_sgd(root, cfg.sgd);
    read_dataset(root, cfg.dataset);
    if (const json* model = root.find("model")) {
        Section s(*model, "model");
        s.read_list("hidden", cfg.hidden);
        s.finish();
    }
    if (const json* partition = root.find("partition")) {
        Section s(*partition, "partition");
        s.read("alpha", cfg.alpha);
        s.finish();
    }
    read_attack(root, cfg.attack);
    read_aggregator(root, cfg.aggregator);
    read_defense(root, cfg.defense);
    root.read("threads", cfg.threads);
    root.read("record_wall_time", cfg.record_wall_time);
    root.finish();
    validate(cfg);
    return cfg;
}

json config_to_json(const ExperimentConfig& cfg)
{
    json j;
    j["seed"] = cfg.seed;
    j["rounds"] = cfg.rounds;
    j["clients"] = cfg.clients;
    j["sampled_per_round"] = cfg.sampled_per_round;
    j["local_epochs"] = cfg.local_epochs;
    j["batch"] = cfg.batch;
    j["sgd"] = {{"learning_rate", cfg.sgd.learning_rate},
                {"momentum", cfg.sgd.momentum},
                {"weight_decay", cfg.sgd.weight_decay},
                {"nesterov", cfg.sgd.nesterov}};
    const auto& d = cfg.dataset;
    j["dataset"] = {{"kind", d.kind == DatasetKind::toy ? "toy" : "idx"},
                    {"num_classes", d.num_classes},
                    {"train_per_class", d.train_per_class},
                    {"test_per_class", d.test_per_class},
                    {"radius", d.radius},
                    {"spread", d.spread},
                    {"train_images", d.train_images},
                    {"train_labels", d.train_labels},
                    {"test_images", d.test_images},
                    {"test_labels", d.test_labels},
                    {"test_fraction", d.test_fraction}};
    j["model"] = {{"hidden", cfg.hidden}};
    j["partition"] = {{"alpha", cfg.alpha}};
    const auto& a = cfg.attack;
    j["attack"] = {{"kind", to_string(a.kind)},
                   {"epsilon", a.epsilon},
                   {"gamma", a.gamma ? json(*a.gamma) : json(nullptr)},
                   {"sigma", a.sigma},
                   {"gamma_grid", a.gamma_grid},
                   {"ipm_criterion", to_string(a.ipm_criterion)}};
    const auto& g = cfg.aggregator;
    j["aggregator"] = {{"kind", to_string(g.kind)},
                       {"beta", g.beta},
                       {"weiszfeld_tol", g.weiszfeld_tol},
                       {"weiszfeld_max_iter", g.weiszfeld_max_iter}};
    if (cfg.defense) {
        const auto& f = *cfg.defense;
        j["defense"] = {{"noise_dim", f.noise_dim},
                        {"q", f.q},
                        {"filter", to_string(f.filter)},
                        {"tau", f.tau ? json(*f.tau) : json(nullptr)},
                        {"metric", to_string(f.metric)},
                        {"gen_lr", f.gen_lr},
                        {"gen_momentum", f.gen_momentum},
                        {"gen_max_iter", f.gen_max_iter},
                        {"early_stop_loss", f.early_stop_loss},
                        {"early_stop_patience", f.early_stop_patience},
                        {"gen_batch", f.gen_batch},
                        {"gen_hidden", f.gen_hidden},
                        {"warm_start", f.warm_start}};
    } else {
        j["defense"] = nullptr;
    }
    j["threads"] = cfg.threads;
    j["record_wall_time"] = cfg.record_wall_time;
    return j;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("", "cannot read config file " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("", "config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void validate(const ExperimentConfig& cfg)
{
    if (cfg.clients < 1) {
        throw ConfigError("clients", "must be at least 1");
    }
    if (cfg.sampled_per_round < 1 || cfg.sampled_per_round > cfg.clients) {
        throw ConfigError("sampled_per_round", "must lie in [1, clients]");
    }
    if (cfg.batch < 1) {
        throw ConfigError("batch", "must be at least 1");
    }
    if (!(cfg.sgd.learning_rate >= 0.0)) {
        throw ConfigError("sgd.learning_rate", "must be non-negative");
    }
    if (!(cfg.sgd.momentum >= 0.0 && cfg.sgd.momentum < 1.0)) {
        throw ConfigError("sgd.momentum", "must lie in [0, 1)");
    }
    if (!(cfg.sgd.weight_decay >= 0.0)) {
        throw ConfigError("sgd.weight_decay", "must be non-negative");
    }
    if (!(cfg.alpha > 0.0)) {
        throw ConfigError("partition.alpha", "must be positive");
    }
    const auto& d = cfg.dataset;
    if (d.kind == DatasetKind::toy) {
        if (d.num_classes < 2) {
            throw ConfigError("dataset.num_classes", "need at least two classes");
        }
        if (d.train_per_class < 1 || d.test_per_class < 1) {
            throw ConfigError("dataset.train_per_class", "toy data needs train and test samples for every class");
        }
        if (!(d.spread > 0.0)) {
            throw ConfigError("dataset.spread", "must be positive");
        }
        if (d.train_per_class * static_cast<std::size_t>(d.num_classes) < cfg.clients) {
            throw ConfigError("clients", "more clients than training samples");
        }
    } else {
        if (d.train_images.empty() || d.train_labels.empty()) {
            throw ConfigError("dataset.train_images", "idx datasets need train_images and train_labels");
        }
        if (!(d.test_fraction > 0.0 && d.test_fraction < 1.0)) {
            throw ConfigError("dataset.test_fraction", "must lie strictly between 0 and 1");
        }
    }
    for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
        if (cfg.hidden[i] == 0) {
            throw ConfigError("model.hidden[" + std::to_string(i) + "]", "layer width must be positive");
        }
    }
    const auto& a = cfg.attack;
    if (!(a.epsilon >= 0.0 && a.epsilon < 1.0)) {
        throw ConfigError("attack.epsilon", "must lie in [0, 1)");
    }
    if (a.gamma && !(*a.gamma > 0.0)) {
        throw ConfigError("attack.gamma", "must be positive");
    }
    if (!(a.sigma >= 0.0)) {
        throw ConfigError("attack.sigma", "must be non-negative");
    }
    if (a.kind == AttackKind::ipm && a.gamma_grid.empty()) {
        throw ConfigError("attack.gamma_grid", "IPM needs at least one candidate");
    }
    const auto& g = cfg.aggregator;
    if (!(g.beta >= 0.0 && g.beta < 0.5)) {
        throw ConfigError("aggregator.beta", "must lie in [0, 0.5)");
    }
    if (!(g.weiszfeld_tol > 0.0)) {
        throw ConfigError("aggregator.weiszfeld_tol", "must be positive");
    }
    if (cfg.defense) {
        const auto& f = *cfg.defense;
        if (f.q < 1) {
            throw ConfigError("defense.q", "must be at least 1");
        }
        if (f.filter == FilterKind::fixed && !f.tau) {
            throw ConfigError("defense.tau", "required when filter is \"fixed\"");
        }
        if (f.filter != FilterKind::fixed && f.tau) {
            throw ConfigError("defense.tau", "only meaningful when filter is \"fixed\"");
        }
        if (f.gen_batch < 1) {
            throw ConfigError("defense.gen_batch", "must be at least 1");
        }
        if (f.noise_dim < 1 || f.gen_hidden < 1) {
            throw ConfigError("defense.noise_dim", "generator widths must be positive");
        }
    }
    if (cfg.threads < 1) {
        throw ConfigError("threads", "must be at least 1");
    }
}

}  // namespace bfl
