#pragma once

#include <algorithm>
#include <random>
#include <vector>

#include "urbanfuse/forecast.hpp"
#include "urbanfuse/nn/layers.hpp"

namespace urbanfuse {

struct StgcnConfig {
    int input_horizon = 12;    // T_in
    int temporal_kernel = 3;   // k_t
    int cheb_order = 3;        // spatial kernel size k
    int num_blocks = 2;
    std::array<int, 3> block_channels{64, 16, 64};
    double huber_delta = 10.0;
    double learning_rate = 1e-3;
    double lr_decay = 0.7;
    int lr_decay_every = 5;
    int max_epochs = 200;
    int patience = 10;
    int batch_size = 32;
    std::uint64_t seed = 0;

    // time steps left after all temporal reductions
    int remaining_steps() const {
        return input_horizon - num_blocks * 2 * (temporal_kernel - 1);
    }

    void validate() const {
        if (temporal_kernel < 2) throw ConfigError("temporal kernel must be >= 2");
        if (cheb_order < 1) throw ConfigError("chebyshev order must be >= 1");
        if (!(huber_delta > 0)) throw ConfigError("huber delta must be positive");
        if (remaining_steps() < 1)
            throw ConfigError("input horizon " + std::to_string(input_horizon) +
                              " leaves no time steps after " + std::to_string(num_blocks) +
                              " blocks of 2x(k_t-1) temporal reduction");
    }

    json to_json() const {
        return json{{"input_horizon", input_horizon},
                    {"temporal_kernel", temporal_kernel},
                    {"cheb_order", cheb_order},
                    {"num_blocks", num_blocks},
                    {"block_channels", block_channels},
                    {"huber_delta", huber_delta},
                    {"learning_rate", learning_rate},
                    {"lr_decay", lr_decay},
                    {"lr_decay_every", lr_decay_every},
                    {"max_epochs", max_epochs},
                    {"patience", patience},
                    {"batch_size", batch_size},
                    {"seed", seed}};
    }

    static StgcnConfig from_json(const json& j) {
        StgcnConfig c;
        c.input_horizon = j.value("input_horizon", c.input_horizon);
        c.temporal_kernel = j.value("temporal_kernel", c.temporal_kernel);
        c.cheb_order = j.value("cheb_order", c.cheb_order);
        c.num_blocks = j.value("num_blocks", c.num_blocks);
        if (j.contains("block_channels")) {
            auto v = j["block_channels"].get<std::vector<int>>();
            if (v.size() != 3) throw ConfigError("block_channels must have 3 entries");
            std::copy(v.begin(), v.end(), c.block_channels.begin());
        }
        c.huber_delta = j.value("huber_delta", c.huber_delta);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.lr_decay = j.value("lr_decay", c.lr_decay);
        c.lr_decay_every = j.value("lr_decay_every", c.lr_decay_every);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.patience = j.value("patience", c.patience);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        return c;
    }
};

// Huber loss, averaged over elements.
inline double huber_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat, double delta) {
    if (y.size() != yhat.size()) throw DataError("huber_loss: shape mismatch");
    double acc = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        double r = std::abs(y(i) - yhat(i));
        acc += r <= delta ? 0.5 * r * r : delta * r - 0.5 * delta * delta;
    }
    return acc / static_cast<double>(y.size());
}

// d(mean Huber)/d(yhat)
inline Eigen::VectorXd huber_loss_grad(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat,
                                       double delta) {
    Eigen::VectorXd g(y.size());
    for (int i = 0; i < y.size(); ++i) {
        double r = yhat(i) - y(i);
        g(i) = (std::abs(r) <= delta ? r : delta * (r > 0 ? 1.0 : -1.0)) /
               static_cast<double>(y.size());
    }
    return g;
}

// Sandwiched temporal-spatial-temporal blocks followed by a per-node fully
// connected head over the remaining (time x channel) activations. All
// predictions live in normalized space; the caller denormalizes.
class StgcnModel {
public:
    StgcnModel(const StgcnConfig& cfg, const nn::Mat& adjacency, int in_channels)
        : cfg_(cfg), cin_(in_channels), n_(static_cast<int>(adjacency.rows())) {
        cfg_.validate();
        std::mt19937_64 rng(cfg_.seed);
        auto basis = nn::chebyshev_basis(nn::scaled_cheb_laplacian(adjacency), cfg_.cheb_order);
        int channels_in = cin_;
        for (int b = 0; b < cfg_.num_blocks; ++b) {
            std::string tag = "block" + std::to_string(b);
            blocks_.push_back(Block{
                nn::TemporalGatedConv(channels_in, cfg_.block_channels[0], cfg_.temporal_kernel,
                                      rng, tag + ".t1"),
                nn::ChebGraphConv(cfg_.block_channels[0], cfg_.block_channels[1], basis, rng,
                                  tag + ".s"),
                nn::TemporalGatedConv(cfg_.block_channels[1], cfg_.block_channels[2],
                                      cfg_.temporal_kernel, rng, tag + ".t2")});
            channels_in = cfg_.block_channels[2];
        }
        head_ = std::make_unique<nn::Dense>(cfg_.remaining_steps() * channels_in, 1, rng, "head");
        head_channels_ = channels_in;
    }

    StgcnModel(const StgcnModel& other) { *this = other; }
    StgcnModel& operator=(const StgcnModel& other) {
        cfg_ = other.cfg_;
        cin_ = other.cin_;
        n_ = other.n_;
        blocks_ = other.blocks_;
        head_ = std::make_unique<nn::Dense>(*other.head_);
        head_channels_ = other.head_channels_;
        return *this;
    }

    const StgcnConfig& config() const { return cfg_; }
    int input_channels() const { return cin_; }
    int nodes() const { return n_; }

    std::vector<nn::Param*> params() {
        std::vector<nn::Param*> out;
        for (auto& b : blocks_) {
            for (nn::Param* p : b.t1.params()) out.push_back(p);
            for (nn::Param* p : b.s.params()) out.push_back(p);
            for (nn::Param* p : b.t2.params()) out.push_back(p);
        }
        for (nn::Param* p : head_->params()) out.push_back(p);
        return out;
    }

    // window: T_in frames of N x C_in -> one normalized prediction per node
    Eigen::VectorXd forward(const nn::Seq& window) {
        if (static_cast<int>(window.size()) != cfg_.input_horizon)
            throw DataError("window length " + std::to_string(window.size()) +
                            " does not match input horizon " +
                            std::to_string(cfg_.input_horizon));
        if (window[0].rows() != n_ || window[0].cols() != cin_)
            throw DataError("window frame shape mismatch");
        nn::Seq h = window;
        for (auto& b : blocks_) {
            h = b.t1.forward(h);
            h = b.s.forward(h);
            h = b.t2.forward(h);
        }
        rem_ = static_cast<int>(h.size());
        nn::Mat flat(n_, rem_ * head_channels_);
        for (int t = 0; t < rem_; ++t) flat.middleCols(t * head_channels_, head_channels_) = h[t];
        return head_->forward(flat).col(0);
    }

    void backward(const Eigen::VectorXd& dpred) {
        nn::Mat dflat = head_->backward(dpred);
        nn::Seq dh(rem_);
        for (int t = 0; t < rem_; ++t) dh[t] = dflat.middleCols(t * head_channels_, head_channels_);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
            dh = it->t2.backward(dh);
            dh = it->s.backward(dh);
            dh = it->t1.backward(dh);
        }
    }

private:
    struct Block {
        nn::TemporalGatedConv t1;
        nn::ChebGraphConv s;
        nn::TemporalGatedConv t2;
    };

    StgcnConfig cfg_;
    int cin_ = 1;
    int n_ = 0;
    std::vector<Block> blocks_;
    std::unique_ptr<nn::Dense> head_;
    int head_channels_ = 0;
    int rem_ = 0;
};

// Training + prediction wrapper owning the normalizers.
class StgcnForecaster {
public:
    StgcnForecaster(const StgcnConfig& cfg, const nn::Mat& adjacency, bool use_weather)
        : cfg_(cfg),
          use_weather_(use_weather),
          model_(cfg, adjacency, use_weather ? 1 + static_cast<int>(weather_variables().size())
                                             : 1) {}

    StgcnModel& model() { return model_; }
    bool uses_weather() const { return use_weather_; }
    const CountNormalizer& normalizer() const { return norm_; }

    TrainHistory train(const ObservationCube& cube, const DatasetSplit& split,
                       const WeatherSeries* weather) {
        if (use_weather_ && !weather)
            throw ConfigError("this STGCN variant needs a weather series");
        const WeatherSeries* w = use_weather_ ? weather : nullptr;
        norm_ = split.normalizer;
        if (w) wnorm_ = fit_weather_normalizer(*w, split.train);

        auto train_targets = window_targets(split.train, cfg_.input_horizon);
        auto val_targets = window_targets(split.validation, cfg_.input_horizon);
        if (train_targets.empty()) throw DataError("train segment shorter than the input horizon");

        auto params = model_.params();
        nn::Adam opt(params);
        std::mt19937_64 shuffle_rng(cfg_.seed ^ 0x9e3779b97f4a7c15ull);

        TrainHistory hist;
        double best_val = std::numeric_limits<double>::infinity();
        std::vector<nn::Mat> best_params;
        int since_best = 0;

        for (int epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
            double lr = cfg_.learning_rate *
                        std::pow(cfg_.lr_decay, std::floor(double(epoch) / cfg_.lr_decay_every));
            std::vector<int> order = train_targets;
            std::shuffle(order.begin(), order.end(), shuffle_rng);

            double epoch_loss = 0.0;
            std::size_t batches = 0;
            for (std::size_t pos = 0; pos < order.size(); pos += cfg_.batch_size) {
                std::size_t take = std::min<std::size_t>(cfg_.batch_size, order.size() - pos);
                opt.zero_grad();
                double batch_loss = 0.0;
                for (std::size_t b = 0; b < take; ++b) {
                    int t = order[pos + b];
                    auto window = assemble_window(cube, t, cfg_.input_horizon, &norm_, w,
                                                  w ? &wnorm_ : nullptr);
                    Eigen::VectorXd target = cube.counts.row(t).transpose().unaryExpr(
                        [&](double v) { return norm_.normalize(v); });
                    Eigen::VectorXd pred = model_.forward(window);
                    batch_loss += huber_loss(target, pred, cfg_.huber_delta);
                    Eigen::VectorXd dpred =
                        huber_loss_grad(target, pred, cfg_.huber_delta) / double(take);
                    model_.backward(dpred);
                }
                batch_loss /= double(take);
                if (!std::isfinite(batch_loss))
                    throw TrainingError("stgcn diverged (non-finite loss) at epoch " +
                                        std::to_string(epoch));
                opt.step(lr);
                epoch_loss += batch_loss;
                ++batches;
            }
            epoch_loss /= double(batches);

            double val_loss = evaluate_loss(cube, val_targets, w);
            if (!std::isfinite(val_loss))
                throw TrainingError("stgcn diverged (non-finite validation loss) at epoch " +
                                    std::to_string(epoch));
            hist.train_loss.push_back(epoch_loss);
            hist.val_loss.push_back(val_loss);
            hist.lr.push_back(lr);

            if (val_loss < best_val - 1e-12) {
                best_val = val_loss;
                hist.best_epoch = epoch;
                since_best = 0;
                best_params.clear();
                for (nn::Param* p : params) best_params.push_back(p->value);
            } else if (++since_best >= cfg_.patience) {
                break;
            }
        }
        if (!best_params.empty())
            for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
        hist.converged = hist.best_epoch >= 0;
        trained_ = true;
        return hist;
    }

    // Denormalized one-step-ahead predictions over a split segment.
    PredictionFrame predict_range(const ObservationCube& cube, const IndexRange& range,
                                  const WeatherSeries* weather) const {
        if (!trained_) throw TrainingError("stgcn model has not been trained");
        const WeatherSeries* w = use_weather_ ? weather : nullptr;
        if (use_weather_ && !w) throw ConfigError("this STGCN variant needs a weather series");
        StgcnModel scratch = model_;  // forward caches stay off the trained state
        auto targets = window_targets(range, cfg_.input_horizon);
        if (targets.empty()) throw DataError("segment shorter than the input horizon");

        PredictionFrame f;
        f.tract_ids = cube.tract_ids;
        f.y.resize(targets.size(), cube.N());
        f.yhat.resize(targets.size(), cube.N());
        for (std::size_t i = 0; i < targets.size(); ++i) {
            int t = targets[i];
            auto window =
                assemble_window(cube, t, cfg_.input_horizon, &norm_, w, w ? &wnorm_ : nullptr);
            Eigen::VectorXd pred = scratch.forward(window);
            f.time_index.push_back(cube.time_index[t]);
            for (int n = 0; n < cube.N(); ++n) {
                f.y(static_cast<int>(i), n) = cube.counts(t, n);
                f.yhat(static_cast<int>(i), n) = norm_.denormalize(pred(n));
            }
        }
        return f;
    }

    json checkpoint() {
        json j;
        j["model"] = "stgcn";
        j["config"] = cfg_.to_json();
        j["uses_weather"] = use_weather_;
        j["normalizer"] = {{"mean", norm_.mean}, {"stdev", norm_.stdev}};
        if (use_weather_) {
            j["weather_normalizer"] = {
                {"mean", std::vector<double>(wnorm_.mean.data(), wnorm_.mean.data() + wnorm_.mean.size())},
                {"stdev",
                 std::vector<double>(wnorm_.stdev.data(), wnorm_.stdev.data() + wnorm_.stdev.size())}};
        }
        j["params"] = params_to_json(model_.params());
        return j;
    }

    void restore(const json& j) {
        norm_.mean = j["normalizer"]["mean"].get<double>();
        norm_.stdev = j["normalizer"]["stdev"].get<double>();
        if (j.contains("weather_normalizer")) {
            auto mean = j["weather_normalizer"]["mean"].get<std::vector<double>>();
            auto sd = j["weather_normalizer"]["stdev"].get<std::vector<double>>();
            wnorm_.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), mean.size());
            wnorm_.stdev = Eigen::Map<Eigen::VectorXd>(sd.data(), sd.size());
        }
        params_from_json(j["params"], model_.params());
        trained_ = true;
    }

private:
    double evaluate_loss(const ObservationCube& cube, const std::vector<int>& targets,
                         const WeatherSeries* w) {
        if (targets.empty()) return std::numeric_limits<double>::quiet_NaN();
        double acc = 0.0;
        for (int t : targets) {
            auto window =
                assemble_window(cube, t, cfg_.input_horizon, &norm_, w, w ? &wnorm_ : nullptr);
            Eigen::VectorXd target = cube.counts.row(t).transpose().unaryExpr(
                [&](double v) { return norm_.normalize(v); });
            acc += huber_loss(target, model_.forward(window), cfg_.huber_delta);
        }
        return acc / double(targets.size());
    }

    StgcnConfig cfg_;
    bool use_weather_ = false;
    StgcnModel model_;
    CountNormalizer norm_;
    WeatherNormalizer wnorm_;
    bool trained_ = false;
};

}  // namespace urbanfuse
