#include "bfl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

namespace bfl {

LocalResult local_training(const Dataset& data, const MlpModel& start, const SgdConfig& sgd, std::size_t epochs,
                           std::size_t batch, Rng& rng)
{
    if (data.size() == 0) {
        throw std::invalid_argument("local training on an empty client dataset");
    }
    MlpModel model = start;
    SgdState state;
    const std::size_t n = data.size();
    const std::size_t b = std::clamp<std::size_t>(batch, 1, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t e = 0; e < epochs; ++e) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t lo = 0; lo < n; lo += b) {
            const std::size_t hi = std::min(n, lo + b);
            const Dataset mb = data.subset(std::span<const std::size_t>(order).subspan(lo, hi - lo));
            const BackwardResult br = backward(model, mb.features, mb.labels);
            sgd_step(model, br.grads, sgd, state);
        }
    }
    return {flatten(model) - flatten(start), n};
}

DetectionRates compute_tpr_tnr(std::span<const std::size_t> accepted, std::span<const std::size_t> sampled,
                               std::span<const std::size_t> malicious)
{
    auto contains = [](std::span<const std::size_t> set, std::size_t id) {
        return std::find(set.begin(), set.end(), id) != set.end();
    };
    for (std::size_t id : accepted) {
        if (!contains(sampled, id)) {
            throw std::invalid_argument("accepted client " + std::to_string(id) + " was not sampled");
        }
    }
    std::size_t tp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    for (std::size_t id : sampled) {
        const bool bad = contains(malicious, id);
        const bool kept = contains(accepted, id);
        if (bad) {
            (kept ? fn : tp) += 1;
        } else {
            (kept ? tn : fp) += 1;
        }
    }
    DetectionRates r;
    r.tpr = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    r.tnr = tn + fp == 0 ? 1.0 : static_cast<double>(tn) / static_cast<double>(tn + fp);
    return r;
}

double evaluate_global(const MlpModel& model, const Dataset& test)
{
    if (test.size() == 0) {
        throw std::invalid_argument("cannot evaluate on an empty test set");
    }
    const auto predicted = argmax_rows(forward(model, test.features));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        correct += predicted[i] == test.labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace {

struct TrainTest {
    Dataset train;
    Dataset test;
    FeatureBounds bounds;
};

TrainTest make_toy(const ExperimentConfig& cfg)
{
    const auto& d = cfg.dataset;
    const auto centers = regular_polygon_centers(d.num_classes, d.radius);
    const std::size_t per_class = d.train_per_class + d.test_per_class;
    const Dataset all = make_toy_blobs(derive_seed(cfg.seed, Stream::data), d.num_classes, per_class, centers, d.spread);
    const double fraction = static_cast<double>(d.test_per_class) / static_cast<double>(per_class);
    SplitResult split = train_test_split(all, fraction, derive_seed(cfg.seed, Stream::data, 1));

    // Box around the blob centres, three spreads wide on each side.
    TrainTest out{std::move(split.train), std::move(split.test), {}};
    for (std::size_t axis = 0; axis < 2; ++axis) {
        double lo = centers.front()[axis];
        double hi = lo;
        for (const auto& c : centers) {
            lo = std::min(lo, c[axis]);
            hi = std::max(hi, c[axis]);
        }
        out.bounds.lo.push_back(lo - 3.0 * d.spread);
        out.bounds.hi.push_back(hi + 3.0 * d.spread);
    }
    return out;
}

TrainTest make_data(const ExperimentConfig& cfg)
{
    const auto& d = cfg.dataset;
    if (d.kind == DatasetKind::toy) {
        return make_toy(cfg);
    }
    if (!std::filesystem::exists(d.train_images) || !std::filesystem::exists(d.train_labels)) {
        std::cerr << "warning: IDX files not found (" << d.train_images << "), using toy blobs instead\n";
        return make_toy(cfg);
    }
    TrainTest out;
    Dataset train = load_idx(d.train_images, d.train_labels);
    if (!d.test_images.empty() && std::filesystem::exists(d.test_images) && std::filesystem::exists(d.test_labels)) {
        out.test = load_idx(d.test_images, d.test_labels);
        out.train = std::move(train);
        const int classes = std::max(out.train.num_classes, out.test.num_classes);
        out.train.num_classes = classes;
        out.test.num_classes = classes;
    } else {
        SplitResult split = train_test_split(train, d.test_fraction, derive_seed(cfg.seed, Stream::data, 1));
        out.train = std::move(split.train);
        out.test = std::move(split.test);
    }
    out.bounds = FeatureBounds::uniform(out.train.feature_dim(), 0.0, 1.0);
    return out;
}

bool aggregator_accepts(const AggregatorConfig& cfg, std::size_t n)
{
    switch (cfg.kind) {
    case AggregatorKind::multi_krum:
    case AggregatorKind::nnm_krum:
        return n >= assumed_malicious_count(n, cfg.beta) + 3;
    case AggregatorKind::trim_avg:
        return 2 * static_cast<std::size_t>(std::floor(cfg.beta * static_cast<double>(n) + 1e-9)) < n;
    default:
        return n >= 1;
    }
}

}  // namespace

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg))
{
    validate(cfg_);
    TrainTest data = make_data(cfg_);
    train_ = std::move(data.train);
    test_ = std::move(data.test);
    bounds_ = std::move(data.bounds);
    if (cfg_.clients > train_.size()) {
        throw ConfigError("clients", "more clients than training samples");
    }

    clients_ = dirichlet_partition(train_, {cfg_.clients, cfg_.alpha, derive_seed(cfg_.seed, Stream::partition)});
    malicious_ = assign_roles(cfg_.clients, cfg_.attack.epsilon, derive_seed(cfg_.seed, Stream::roles));

    std::vector<std::size_t> dims{train_.feature_dim()};
    dims.insert(dims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
    dims.push_back(static_cast<std::size_t>(train_.num_classes));
    Rng init(derive_seed(cfg_.seed, Stream::model_init));
    global_ = make_mlp(dims, Activation::relu, Activation::identity, init);
}

bool Experiment::is_malicious(std::size_t id) const
{
    return std::binary_search(malicious_.begin(), malicious_.end(), id);
}

std::vector<std::size_t> Experiment::sample_clients(std::size_t round) const
{
    std::vector<std::size_t> ids(cfg_.clients);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(derive_seed(cfg_.seed, Stream::sampling, round));
    rng.shuffle(std::span<std::size_t>(ids));
    ids.resize(cfg_.sampled_per_round);
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::vector<LocalResult> Experiment::train_clients(const std::vector<std::size_t>& sampled, std::size_t round) const
{
    std::vector<LocalResult> results(sampled.size());
    auto job = [&](std::size_t k) {
        const std::size_t id = sampled[k];
        Rng rng(derive_seed(cfg_.seed, Stream::client_training, round, id));
        const bool flip = is_malicious(id) && cfg_.attack.kind == AttackKind::label_flip;
        const Dataset& own = clients_[id].data;
        results[k] = flip ? local_training(label_flip_transform(own), global_, cfg_.sgd, cfg_.local_epochs,
                                           cfg_.batch, rng)
                          : local_training(own, global_, cfg_.sgd, cfg_.local_epochs, cfg_.batch, rng);
    };
    const std::size_t workers = std::min(cfg_.threads, sampled.size());
    if (workers <= 1) {
        for (std::size_t k = 0; k < sampled.size(); ++k) {
            job(k);
        }
        return results;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k = next++; k < sampled.size(); k = next++) {
                job(k);
            }
        });
    }
    pool.clear();
    return results;
}

RoundRecord Experiment::run_round()
{
    const auto started = std::chrono::steady_clock::now();
    const std::size_t t = ++round_;
    RoundRecord rec;
    rec.round = t;
    rec.sampled = sample_clients(t);
    for (std::size_t id : rec.sampled) {
        if (is_malicious(id)) {
            rec.malicious_sampled.push_back(id);
        }
    }

    std::vector<LocalResult> local = train_clients(rec.sampled, t);

    // Malicious payloads replace the honest deltas of the compromised clients.
    std::vector<std::size_t> bad_pos;
    for (std::size_t k = 0; k < rec.sampled.size(); ++k) {
        if (is_malicious(rec.sampled[k])) {
            bad_pos.push_back(k);
        }
    }
    if (!bad_pos.empty()) {
        const auto& atk = cfg_.attack;
        switch (atk.kind) {
        case AttackKind::none:
        case AttackKind::label_flip:
            if (atk.kind == AttackKind::label_flip) {
                for (std::size_t k : bad_pos) {
                    local[k].delta = scale_update(local[k].delta, atk.effective_gamma());
                }
            }
            break;
        case AttackKind::sign_flip:
            for (std::size_t k : bad_pos) {
                local[k].delta = sign_flip_attack(local[k].delta, atk.effective_gamma());
            }
            break;
        case AttackKind::random_noise: {
            Rng rng(derive_seed(cfg_.seed, Stream::attack_noise, t));
            const Delta noise = draw_shared_noise(local[bad_pos.front()].delta.size(), atk.sigma, rng);
            const Delta payload = random_noise_attack(local[bad_pos.front()].delta, noise);
            for (std::size_t k : bad_pos) {
                local[k].delta = payload;
            }
            break;
        }
        case AttackKind::ipm: {
            std::vector<Delta> own;
            std::vector<std::size_t> proxy_rows;
            for (std::size_t k : bad_pos) {
                own.push_back(local[k].delta);
                const auto& idx = clients_[rec.sampled[k]].indices;
                proxy_rows.insert(proxy_rows.end(), idx.begin(), idx.end());
            }
            std::sort(proxy_rows.begin(), proxy_rows.end());
            const Dataset proxy = train_.subset(proxy_rows);
            const IpmResult ipm = ipm_attack(mean_delta(own), atk.gamma_grid, proxy, global_, rec.sampled.size(),
                                             bad_pos.size(), atk.ipm_criterion);
            for (std::size_t k : bad_pos) {
                local[k].delta = ipm.payload;
            }
            break;
        }
        }
    }

    const ParamVector base = flatten(global_);
    std::vector<ClientUpdate> updates;
    updates.reserve(rec.sampled.size());
    for (std::size_t k = 0; k < rec.sampled.size(); ++k) {
        updates.push_back({rec.sampled[k], base + local[k].delta, local[k].sample_count});
    }

    std::vector<std::size_t> filtered = rec.sampled;
    if (cfg_.defense) {
        const GeneratorModel* warm = cfg_.defense->warm_start && generator_ ? &*generator_ : nullptr;
        DefenseOutcome outcome = run_defense(global_, updates, *cfg_.defense, bounds_,
                                             derive_seed(cfg_.seed, Stream::generator_init, t), warm);
        rec.gan_iters = outcome.training.iterations;
        rec.scores = outcome.board;
        filtered = std::move(outcome.accepted);
        if (cfg_.defense->warm_start) {
            generator_ = std::move(outcome.training.generator);
        }
    }

    std::vector<ClientUpdate> kept;
    for (const auto& u : updates) {
        if (std::binary_search(filtered.begin(), filtered.end(), u.client_id)) {
            kept.push_back(u);
        }
    }
    if (!kept.empty()) {
        // Too few survivors for the configured rule: fall back to FedAvg.
        AggregatorConfig agg = cfg_.aggregator;
        if (!aggregator_accepts(agg, kept.size())) {
            agg.kind = AggregatorKind::fedavg;
        }
        Selection sel = aggregate(kept, agg);
        global_ = unflatten(global_, sel.params);
        rec.accepted = std::move(sel.selected_ids);
    }
    for (std::size_t id : rec.sampled) {
        if (!std::binary_search(rec.accepted.begin(), rec.accepted.end(), id)) {
            rec.rejected.push_back(id);
        }
    }

    rec.acc = evaluate_global(global_, test_);
    const DetectionRates rates = compute_tpr_tnr(rec.accepted, rec.sampled, malicious_);
    rec.tpr = rates.tpr;
    rec.tnr = rates.tnr;
    if (cfg_.record_wall_time) {
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    return rec;
}

RunReport run_experiment(const ExperimentConfig& cfg)
{
    Experiment exp(cfg);
    RunReport report;
    report.config = exp.config();
    report.malicious = exp.malicious();
    report.initial_acc = evaluate_global(exp.global_model(), exp.test_set());
    report.final_acc = report.initial_acc;
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        report.rounds.push_back(exp.run_round());
        report.final_acc = report.rounds.back().acc;
    }
    double tpr_sum = 0.0;
    double tnr_sum = 0.0;
    for (const auto& r : report.rounds) {
        if (!r.malicious_sampled.empty()) {
            ++report.attack_rounds;
            tpr_sum += r.tpr;
            tnr_sum += r.tnr;
        }
    }
    if (report.attack_rounds > 0) {
        report.mean_tpr = tpr_sum / static_cast<double>(report.attack_rounds);
        report.mean_tnr = tnr_sum / static_cast<double>(report.attack_rounds);
    } else if (!report.rounds.empty()) {
        for (const auto& r : report.rounds) {
            tnr_sum += r.tnr;
        }
        report.mean_tnr = tnr_sum / static_cast<double>(report.rounds.size());
    }
    return report;
}

namespace {

std::string fmt_real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join_ids(const std::vector<std::size_t>& ids)
{
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) {
            out += ';';
        }
        out += std::to_string(ids[i]);
    }
    return out;
}

void write_file(const std::filesystem::path& path, const std::string& contents)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << contents;
    out.flush();
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

}  // namespace

std::string report_csv(const RunReport& report)
{
    std::string out = "round,acc,tpr,tnr,accepted,rejected,gan_iters,wall_ms\n";
    for (const auto& r : report.rounds) {
        out += std::to_string(r.round) + ',' + fmt_real(r.acc) + ',' + fmt_real(r.tpr) + ',' + fmt_real(r.tnr) + ',' +
               join_ids(r.accepted) + ',' + join_ids(r.rejected) + ',' + std::to_string(r.gan_iters) + ',' +
               fmt_real(r.wall_ms) + '\n';
    }
    return out;
}

nlohmann::json report_json(const RunReport& report)
{
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto& r : report.rounds) {
        nlohmann::json scores = nlohmann::json::array();
        for (const auto& e : r.scores) {
            scores.push_back({{"client_id", e.client_id}, {"metric", e.metric}, {"accepted", e.accepted}});
        }
        rounds.push_back({{"round", r.round},
                          {"acc", r.acc},
                          {"tpr", r.tpr},
                          {"tnr", r.tnr},
                          {"sampled", r.sampled},
                          {"accepted", r.accepted},
                          {"rejected", r.rejected},
                          {"malicious_sampled", r.malicious_sampled},
                          {"gan_iters", r.gan_iters},
                          {"scores", scores},
                          {"wall_ms", r.wall_ms}});
    }
    return {{"config", config_to_json(report.config)},
            {"malicious", report.malicious},
            {"initial_acc", report.initial_acc},
            {"final_acc", report.final_acc},
            {"mean_tpr", report.mean_tpr},
            {"mean_tnr", report.mean_tnr},
            {"attack_rounds", report.attack_rounds},
            {"rounds", rounds}};
}

void emit_report(const RunReport& report, const std::filesystem::path& csv_path,
                 const std::filesystem::path& json_path)
{
    write_file(csv_path, report_csv(report));
    write_file(json_path, report_json(report).dump(2) + "\n");
}

}  // namespace bfl
