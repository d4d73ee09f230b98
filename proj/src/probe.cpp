#include "blueprint/probe.hpp"

#include <algorithm>
#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace blueprint::probe {

namespace {

void split(ProbeDataset& ds, double val_fraction, std::uint64_t split_seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw Error("val_fraction must be in (0, 1)");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(split_seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t val = 0;
    if (order.size() >= 2) {
        val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(order.size())));
        val = std::clamp<std::size_t>(val, 1, order.size() - 1);
    }
    ds.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val));
    ds.train.assign(order.begin() + static_cast<std::ptrdiff_t>(val), order.end());
    std::sort(ds.validation.begin(), ds.validation.end());
    std::sort(ds.train.begin(), ds.train.end());
}

void check_dims(const LinearProbe& p, const ProbeDataset& ds) {
    if (p.vocab_size != ds.vocab_size || p.dim != ds.dim)
        throw Error(fmt::format("dimension mismatch: probe is {}x{}, dataset is {}x{}", p.vocab_size, p.dim,
                                ds.vocab_size, ds.dim));
}

// Mean cross-entropy and (optionally) its gradient, all in double precision.
double loss_and_gradient(const double* w, const double* b, std::size_t vocab, std::size_t dim,
                         const ProbeDataset& ds, std::span<const std::size_t> indices, double* gw, double* gb) {
    if (indices.empty()) throw Error("no examples to evaluate");
    if (gw) std::fill(gw, gw + vocab * dim, 0.0);
    if (gb) std::fill(gb, gb + vocab, 0.0);
    std::vector<double> z(vocab);
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(indices.size());
    for (std::size_t idx : indices) {
        const auto x = ds.row(idx);
        for (std::size_t k = 0; k < vocab; ++k) {
            double acc = b[k];
            const double* wk = w + k * dim;
            for (std::size_t j = 0; j < dim; ++j) acc += wk[j] * static_cast<double>(x[j]);
            z[k] = acc;
        }
        const double zmax = *std::max_element(z.begin(), z.end());
        double denom = 0.0;
        for (double v : z) denom += std::exp(v - zmax);
        const double lse = zmax + std::log(denom);
        const auto y = static_cast<std::size_t>(ds.labels[idx]);
        total += lse - z[y];
        if (gw) {
            for (std::size_t k = 0; k < vocab; ++k) {
                const double delta = (std::exp(z[k] - lse) - (k == y ? 1.0 : 0.0)) * inv;
                gb[k] += delta;
                double* gk = gw + k * dim;
                for (std::size_t j = 0; j < dim; ++j) gk[j] += delta * static_cast<double>(x[j]);
            }
        }
    }
    return total * inv;
}

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

}  // namespace

ProbeDataset make_dataset(std::vector<float> features, std::size_t dim, std::vector<std::int64_t> labels,
                          std::int64_t vocab_size, double val_fraction, std::uint64_t split_seed, int offset_n) {
    if (dim == 0) throw Error("feature dimension must be positive");
    if (features.size() < labels.size() * dim) throw Error("fewer feature rows than labels");
    for (auto y : labels)
        if (y < 0 || y >= vocab_size) throw Error(fmt::format("label {} out of range [0, {})", y, vocab_size));
    ProbeDataset ds;
    ds.features = std::make_shared<const std::vector<float>>(std::move(features));
    ds.dim = dim;
    ds.labels = std::move(labels);
    ds.vocab_size = vocab_size;
    ds.offset_n = offset_n;
    split(ds, val_fraction, split_seed);
    return ds;
}

ProbeDataset build_probe_dataset(const corpus::HiddenStateDataset& h, int n, double val_fraction,
                                 std::uint64_t split_seed) {
    if (n < 1) throw Error("probe offset n must be at least 1");
    const std::size_t t = h.size();
    if (t <= static_cast<std::size_t>(n) + 1)
        throw Error(fmt::format("T too small: need more than {} tokens for offset {}, have {}", n + 1, n, t));
    ProbeDataset ds;
    ds.features = h.rows;
    ds.dim = h.hidden_dim;
    ds.vocab_size = h.vocab_size;
    ds.offset_n = n;
    const std::size_t pairs = t - 1 - static_cast<std::size_t>(n);
    ds.labels.resize(pairs);
    for (std::size_t i = 0; i < pairs; ++i) ds.labels[i] = h.token_ids[i + 1 + static_cast<std::size_t>(n)];
    split(ds, val_fraction, split_seed);
    return ds;
}

LinearProbe LinearProbe::zeros(std::int64_t vocab_size, std::size_t dim) {
    if (vocab_size < 1 || dim == 0) throw Error("probe dimensions must be positive");
    LinearProbe p;
    p.vocab_size = vocab_size;
    p.dim = dim;
    p.weights.assign(static_cast<std::size_t>(vocab_size) * dim, 0.0f);
    p.bias.assign(static_cast<std::size_t>(vocab_size), 0.0f);
    return p;
}

std::int64_t LinearProbe::predict(std::span<const float> x) const {
    std::int64_t best = 0;
    float best_score = -std::numeric_limits<float>::infinity();
    for (std::int64_t k = 0; k < vocab_size; ++k) {
        const float* wk = weights.data() + static_cast<std::size_t>(k) * dim;
        float acc = bias[static_cast<std::size_t>(k)];
        for (std::size_t j = 0; j < dim; ++j) acc += wk[j] * x[j];
        if (acc > best_score) {
            best_score = acc;
            best = k;
        }
    }
    return best;
}

double mean_loss(const LinearProbe& p, const ProbeDataset& ds, std::span<const std::size_t> indices) {
    check_dims(p, ds);
    const auto w = widen(p.weights), b = widen(p.bias);
    return loss_and_gradient(w.data(), b.data(), static_cast<std::size_t>(p.vocab_size), p.dim, ds, indices,
                             nullptr, nullptr);
}

Gradient loss_gradient(const LinearProbe& p, const ProbeDataset& ds, std::span<const std::size_t> indices) {
    check_dims(p, ds);
    const auto w = widen(p.weights), b = widen(p.bias);
    Gradient g{std::vector<double>(w.size()), std::vector<double>(b.size())};
    loss_and_gradient(w.data(), b.data(), static_cast<std::size_t>(p.vocab_size), p.dim, ds, indices,
                      g.weights.data(), g.bias.data());
    return g;
}

LinearProbe train_probe(const ProbeDataset& ds, const TrainOptions& options) {
    if (options.epochs < 1 || !(options.lr > 0.0) || options.batch < 1)
        throw Error("epochs, lr and batch must be positive");
    if (ds.train.empty()) throw Error("training split is empty");

    LinearProbe p = LinearProbe::zeros(ds.vocab_size, ds.dim);
    p.trained_offset = ds.offset_n;
    p.seed = options.seed;
    p.options = options;
    p.initial_loss = mean_loss(p, ds, ds.train);

    const auto vocab = static_cast<std::size_t>(ds.vocab_size);
    const std::size_t dim = ds.dim;
    std::vector<float> gw(vocab * dim), gb(vocab), z(vocab);
    std::vector<std::size_t> order = ds.train;
    std::mt19937_64 rng(options.seed);
    const auto lr = static_cast<float>(options.lr);

    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t batch_no = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch, ++batch_no) {
            const std::size_t stop = std::min(order.size(), start + options.batch);
            const float inv = 1.0f / static_cast<float>(stop - start);
            std::fill(gw.begin(), gw.end(), 0.0f);
            std::fill(gb.begin(), gb.end(), 0.0f);
            double batch_loss = 0.0;
            for (std::size_t s = start; s < stop; ++s) {
                const std::size_t idx = order[s];
                const auto x = ds.row(idx);
                for (std::size_t k = 0; k < vocab; ++k) {
                    const float* wk = p.weights.data() + k * dim;
                    float acc = p.bias[k];
                    for (std::size_t j = 0; j < dim; ++j) acc += wk[j] * x[j];
                    z[k] = acc;
                }
                const float zmax = *std::max_element(z.begin(), z.end());
                double denom = 0.0;
                for (float v : z) denom += std::exp(static_cast<double>(v - zmax));
                const double lse = static_cast<double>(zmax) + std::log(denom);
                const auto y = static_cast<std::size_t>(ds.labels[idx]);
                batch_loss += lse - static_cast<double>(z[y]);
                for (std::size_t k = 0; k < vocab; ++k) {
                    const float prob = static_cast<float>(std::exp(static_cast<double>(z[k]) - lse));
                    const float delta = (prob - (k == y ? 1.0f : 0.0f)) * inv;
                    gb[k] += delta;
                    float* gk = gw.data() + k * dim;
                    for (std::size_t j = 0; j < dim; ++j) gk[j] += delta * x[j];
                }
            }
            if (!std::isfinite(batch_loss))
                throw Error(fmt::format("training diverged: non-finite loss at epoch {} batch {}", epoch, batch_no));
            for (std::size_t i = 0; i < gw.size(); ++i) p.weights[i] -= lr * gw[i];
            for (std::size_t k = 0; k < vocab; ++k) p.bias[k] -= lr * gb[k];
        }
    }
    p.final_loss = mean_loss(p, ds, ds.train);
    if (!std::isfinite(p.final_loss)) throw Error("training diverged: non-finite final loss");
    return p;
}

double probe_accuracy(const LinearProbe& p, const ProbeDataset& ds, std::span<const std::size_t> indices) {
    check_dims(p, ds);
    if (indices.empty()) throw Error("no examples to evaluate");
    std::size_t hits = 0;
    for (std::size_t idx : indices) hits += p.predict(ds.row(idx)) == ds.labels[idx];
    return static_cast<double>(hits) / static_cast<double>(indices.size());
}

double probe_accuracy(const LinearProbe& p, const ProbeDataset& ds) { return probe_accuracy(p, ds, ds.validation); }

double gradient_check(const ProbeDataset& ds, const LinearProbe& p, double epsilon, std::uint64_t seed) {
    check_dims(p, ds);
    if (ds.size() > 64) throw Error("gradient check is meant for datasets of at most 64 pairs");
    if (!(epsilon > 0.0)) throw Error("epsilon must be positive");
    std::vector<std::size_t> rows(ds.size());
    std::iota(rows.begin(), rows.end(), 0);

    const auto vocab = static_cast<std::size_t>(p.vocab_size);
    const std::size_t dim = p.dim;
    std::vector<double> w = widen(p.weights), b = widen(p.bias);
    std::vector<double> gw(w.size()), gb(b.size());
    loss_and_gradient(w.data(), b.data(), vocab, dim, ds, rows, gw.data(), gb.data());

    // Coordinates index weights first, then biases.
    const std::size_t total = w.size() + b.size();
    std::vector<std::size_t> coords(total);
    std::iota(coords.begin(), coords.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min<std::size_t>(total, std::max<std::size_t>(100, total / 10)));

    double worst = 0.0;
    for (std::size_t c : coords) {
        double& param = c < w.size() ? w[c] : b[c - w.size()];
        const double analytic = c < w.size() ? gw[c] : gb[c - w.size()];
        const double saved = param;
        param = saved + epsilon;
        const double up = loss_and_gradient(w.data(), b.data(), vocab, dim, ds, rows, nullptr, nullptr);
        param = saved - epsilon;
        const double down = loss_and_gradient(w.data(), b.data(), vocab, dim, ds, rows, nullptr, nullptr);
        param = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double scale = std::max(std::abs(analytic), std::abs(numeric));
        const double err = scale < 1e-10 ? std::abs(analytic - numeric) : std::abs(analytic - numeric) / scale;
        worst = std::max(worst, err);
    }
    return worst;
}

void save_probe(const std::filesystem::path& meta_path, const std::filesystem::path& weights_path,
                const LinearProbe& p) {
    std::ofstream out(meta_path, std::ios::binary);
    if (!out) throw Error(fmt::format("{}: cannot open for writing", meta_path.string()));
    out << nlohmann::json{{"V", p.vocab_size},
                          {"d", p.dim},
                          {"offset", p.trained_offset},
                          {"seed", p.seed},
                          {"epochs", p.options.epochs},
                          {"lr", p.options.lr},
                          {"batch", p.options.batch},
                          {"initial_loss", p.initial_loss},
                          {"final_loss", p.final_loss}}
               .dump(2)
        << '\n';
    std::vector<float> flat = p.weights;
    flat.insert(flat.end(), p.bias.begin(), p.bias.end());
    corpus::write_f32_le(weights_path, flat);
}

LinearProbe load_probe(const std::filesystem::path& meta_path, const std::filesystem::path& weights_path) {
    std::ifstream in(meta_path);
    if (!in) throw Error(fmt::format("{}: cannot open file", meta_path.string()));
    LinearProbe p;
    try {
        const auto meta = nlohmann::json::parse(in);
        p.vocab_size = meta.at("V").get<std::int64_t>();
        p.dim = meta.at("d").get<std::size_t>();
        p.trained_offset = meta.at("offset").get<int>();
        p.seed = meta.at("seed").get<std::uint64_t>();
        p.options.epochs = meta.at("epochs").get<int>();
        p.options.lr = meta.at("lr").get<double>();
        p.options.batch = meta.at("batch").get<std::size_t>();
        p.options.seed = p.seed;
        p.initial_loss = meta.at("initial_loss").get<double>();
        p.final_loss = meta.at("final_loss").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(fmt::format("{}: malformed probe metadata: {}", meta_path.string(), e.what()));
    }
    auto flat = corpus::read_f32_le(weights_path);
    const auto vocab = static_cast<std::size_t>(p.vocab_size);
    if (flat.size() != vocab * p.dim + vocab)
        throw Error(fmt::format("{}: size mismatch for a {}x{} probe", weights_path.string(), vocab, p.dim));
    p.bias.assign(flat.end() - static_cast<std::ptrdiff_t>(vocab), flat.end());
    flat.resize(vocab * p.dim);
    p.weights = std::move(flat);
    for (float v : p.weights)
        if (!std::isfinite(v)) throw Error(fmt::format("{}: non-finite weight", weights_path.string()));
    return p;
}

}  // namespace blueprint::probe
