#pragma once

#include <algorithm>
#include <memory>
#include <random>
#include <vector>

#include "urbanfuse/forecast.hpp"
#include "urbanfuse/nn/layers.hpp"
#include "urbanfuse/zinb.hpp"

namespace urbanfuse {

struct StzinbConfig {
    int input_horizon = 12;
    int diffusion_order = 2;               // K in the diffusion convolution
    int graph_layers = 3;                  // stacked DGCN layers
    std::array<int, 3> tcn_widths{32, 32, 32};
    int embed_dim = 32;                    // d_h
    int attn_heads = 4;
    double learning_rate = 1e-4;
    int max_epochs = 200;
    int patience = 10;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const {
        if (diffusion_order < 1) throw ConfigError("diffusion order must be >= 1");
        if (embed_dim % attn_heads != 0)
            throw ConfigError("embed_dim must be divisible by attn_heads");
        if (input_horizon < 1) throw ConfigError("input horizon must be >= 1");
    }

    json to_json() const {
        return json{{"input_horizon", input_horizon},
                    {"diffusion_order", diffusion_order},
                    {"graph_layers", graph_layers},
                    {"tcn_widths", tcn_widths},
                    {"embed_dim", embed_dim},
                    {"attn_heads", attn_heads},
                    {"learning_rate", learning_rate},
                    {"max_epochs", max_epochs},
                    {"patience", patience},
                    {"batch_size", batch_size},
                    {"seed", seed}};
    }

    static StzinbConfig from_json(const json& j) {
        StzinbConfig c;
        c.input_horizon = j.value("input_horizon", c.input_horizon);
        c.diffusion_order = j.value("diffusion_order", c.diffusion_order);
        c.graph_layers = j.value("graph_layers", c.graph_layers);
        if (j.contains("tcn_widths")) {
            auto v = j["tcn_widths"].get<std::vector<int>>();
            if (v.size() != 3) throw ConfigError("tcn_widths must have 3 entries");
            std::copy(v.begin(), v.end(), c.tcn_widths.begin());
        }
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.attn_heads = j.value("attn_heads", c.attn_heads);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.patience = j.value("patience", c.patience);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        return c;
    }
};

struct ZinbField {
    Eigen::VectorXd n, p, pi;  // per node

    void check_finite() const {
        if (!n.allFinite() || !p.allFinite() || !pi.allFinite())
            throw TrainingError("non-finite ZINB head activation");
    }
};

// Spatial branch (stacked diffusion graph convolutions over the raw count
// window) and temporal branch (stacked gated 1D convolutions over the window
// axis) each feed three parameter heads; the per-parameter pre-activations
// are fused node-wise by Hadamard product and mapped through
// softplus/sigmoid. The 3d2d1d variant embeds the weather window into each
// temporal parameter embedding through one cross-attention + feed-forward
// layer before the heads.
class StzinbModel {
public:
    StzinbModel(const StzinbConfig& cfg, const nn::Mat& adjacency, bool use_attention,
                std::vector<std::string>* log = nullptr)
        : cfg_(cfg), n_(static_cast<int>(adjacency.rows())), attention_(use_attention) {
        cfg_.validate();
        std::mt19937_64 rng(cfg_.seed);
        nn::Mat transition = nn::row_normalized_transition(adjacency, log);

        int c = cfg_.input_horizon;
        for (int l = 0; l < cfg_.graph_layers; ++l) {
            dgcn_.emplace_back(c, cfg_.embed_dim, transition, cfg_.diffusion_order, rng,
                               "dgcn" + std::to_string(l));
            c = cfg_.embed_dim;
        }
        int w = cfg_.input_horizon;
        for (int l = 0; l < 3; ++l) {
            tcn_.emplace_back(w, cfg_.tcn_widths[l], rng, "tcn" + std::to_string(l));
            w = cfg_.tcn_widths[l];
        }
        for (int h = 0; h < 3; ++h) {
            const char* tags[] = {"n", "p", "pi"};
            spatial_head_.push_back(
                std::make_unique<nn::Dense>(cfg_.embed_dim, 1, rng, std::string("shead_") + tags[h]));
            temporal_embed_.push_back(std::make_unique<nn::Dense>(
                w, cfg_.embed_dim, rng, std::string("tembed_") + tags[h]));
            if (attention_)
                attn_.push_back(std::make_unique<nn::CrossAttention>(
                    cfg_.embed_dim, cfg_.attn_heads,
                    static_cast<int>(weather_variables().size()), rng,
                    std::string("attn_") + tags[h]));
            temporal_head_.push_back(
                std::make_unique<nn::Dense>(cfg_.embed_dim, 1, rng, std::string("thead_") + tags[h]));
        }
    }

    StzinbModel(const StzinbModel& other) { *this = other; }
    StzinbModel& operator=(const StzinbModel& other) {
        cfg_ = other.cfg_;
        n_ = other.n_;
        attention_ = other.attention_;
        dgcn_ = other.dgcn_;
        tcn_ = other.tcn_;
        auto clone = [](auto& dst, const auto& src) {
            dst.clear();
            for (const auto& p : src)
                dst.push_back(std::make_unique<typename std::decay_t<decltype(*p)>>(*p));
        };
        clone(spatial_head_, other.spatial_head_);
        clone(temporal_embed_, other.temporal_embed_);
        clone(attn_, other.attn_);
        clone(temporal_head_, other.temporal_head_);
        for (int i = 0; i < 3; ++i) {
            spre_[i] = other.spre_[i];
            tpre_[i] = other.tpre_[i];
            pre_[i] = other.pre_[i];
        }
        acts_ = other.acts_;
        return *this;
    }

    const StzinbConfig& config() const { return cfg_; }
    bool uses_attention() const { return attention_; }
    int nodes() const { return n_; }

    std::vector<nn::Param*> params() {
        std::vector<nn::Param*> out;
        for (auto& l : dgcn_)
            for (nn::Param* p : l.params()) out.push_back(p);
        for (auto& l : tcn_)
            for (nn::Param* p : l.params()) out.push_back(p);
        for (int h = 0; h < 3; ++h) {
            for (nn::Param* p : spatial_head_[h]->params()) out.push_back(p);
            for (nn::Param* p : temporal_embed_[h]->params()) out.push_back(p);
            if (attention_)
                for (nn::Param* p : attn_[h]->params()) out.push_back(p);
            for (nn::Param* p : temporal_head_[h]->params()) out.push_back(p);
        }
        return out;
    }

    // window: N x T_in raw counts; weather: T_in x W (z-scored), required only
    // by the attention variant.
    ZinbField forward(const nn::Mat& window, const nn::Mat* weather) {
        if (window.rows() != n_ || window.cols() != cfg_.input_horizon)
            throw DataError("stzinb window shape mismatch");
        if (attention_ && !weather)
            throw ConfigError("the 3d2d1d variant needs a weather window");

        nn::Mat h = window;
        for (auto& l : dgcn_) h = l.forward(h);
        nn::Mat u = window;
        for (auto& l : tcn_) u = l.forward(u);

        ZinbField field;
        for (int idx = 0; idx < 3; ++idx) {
            spre_[idx] = spatial_head_[idx]->forward(h).col(0);
            nn::Mat emb = temporal_embed_[idx]->forward(u);
            if (attention_) emb = attn_[idx]->forward(emb, *weather);
            tpre_[idx] = temporal_head_[idx]->forward(emb).col(0);
            pre_[idx] = spre_[idx].cwiseProduct(tpre_[idx]);
            if (!pre_[idx].allFinite())
                throw TrainingError("non-finite ZINB head pre-activation");
        }
        field.n.resize(n_);
        field.p.resize(n_);
        field.pi.resize(n_);
        acts_.clear();
        for (int i = 0; i < n_; ++i) {
            acts_.push_back(ZinbActivation::apply(pre_[0](i), pre_[1](i), pre_[2](i)));
            field.n(i) = acts_[i].n;
            field.p(i) = acts_[i].p;
            field.pi(i) = acts_[i].pi;
        }
        field.check_finite();
        return field;
    }

    // Mean negative log likelihood over nodes.
    double loss(const Eigen::VectorXd& y) const {
        double acc = 0.0;
        for (int i = 0; i < n_; ++i)
            acc -= zinb_log_pmf(static_cast<long long>(std::llround(y(i))), acts_[i].point());
        return acc / static_cast<double>(n_);
    }

    // Backpropagates d(mean NLL)/d(params) for the most recent forward,
    // scaled by `weight` (1/batch for batch means).
    void backward(const Eigen::VectorXd& y, double weight = 1.0) {
        Eigen::VectorXd dpre_n(n_), dpre_p(n_), dpre_pi(n_);
        for (int i = 0; i < n_; ++i) {
            ZinbGrad g = zinb_log_pmf_grad(static_cast<long long>(std::llround(y(i))),
                                           acts_[i].point());
            ZinbGrad d = acts_[i].backward(pre_[0](i), pre_[1](i), pre_[2](i), g);
            double scale = -weight / static_cast<double>(n_);
            dpre_n(i) = scale * d.dn;
            dpre_p(i) = scale * d.dp;
            dpre_pi(i) = scale * d.dpi;
        }
        nn::Mat dh = nn::Mat::Zero(n_, cfg_.embed_dim);
        nn::Mat du = nn::Mat::Zero(n_, cfg_.tcn_widths[2]);
        Eigen::VectorXd dpre[3] = {dpre_n, dpre_p, dpre_pi};
        for (int idx = 0; idx < 3; ++idx) {
            Eigen::VectorXd dsp = dpre[idx].cwiseProduct(tpre_[idx]);
            Eigen::VectorXd dtp = dpre[idx].cwiseProduct(spre_[idx]);
            dh += spatial_head_[idx]->backward(dsp);
            nn::Mat demb = temporal_head_[idx]->backward(dtp);
            if (attention_) demb = attn_[idx]->backward(demb);
            du += temporal_embed_[idx]->backward(demb);
        }
        for (auto it = tcn_.rbegin(); it != tcn_.rend(); ++it) du = it->backward(du);
        for (auto it = dgcn_.rbegin(); it != dgcn_.rend(); ++it) dh = it->backward(dh);
    }

private:
    StzinbConfig cfg_;
    int n_ = 0;
    bool attention_ = false;
    std::vector<nn::DiffusionGraphConv> dgcn_;
    std::vector<nn::TemporalConv1d> tcn_;
    std::vector<std::unique_ptr<nn::Dense>> spatial_head_;
    std::vector<std::unique_ptr<nn::Dense>> temporal_embed_;
    std::vector<std::unique_ptr<nn::CrossAttention>> attn_;
    std::vector<std::unique_ptr<nn::Dense>> temporal_head_;

    Eigen::VectorXd spre_[3], tpre_[3], pre_[3];
    std::vector<ZinbActivation> acts_;
};

// STZINB trains on raw counts; only the weather window is normalized.
class StzinbForecaster {
public:
    StzinbForecaster(const StzinbConfig& cfg, const nn::Mat& adjacency, bool use_attention,
                     std::vector<std::string>* log = nullptr)
        : cfg_(cfg), model_(cfg, adjacency, use_attention, log) {}

    StzinbModel& model() { return model_; }
    bool uses_weather() const { return model_.uses_attention(); }

    TrainHistory train(const ObservationCube& cube, const DatasetSplit& split,
                       const WeatherSeries* weather) {
        const bool use_w = model_.uses_attention();
        if (use_w && !weather) throw ConfigError("the 3d2d1d variant needs a weather series");
        if (use_w) {
            if (weather->time_index != cube.time_index)
                throw DataError("weather clock does not match the observation cube");
            wnorm_ = fit_weather_normalizer(*weather, split.train);
        }

        auto train_targets = window_targets(split.train, cfg_.input_horizon);
        auto val_targets = window_targets(split.validation, cfg_.input_horizon);
        if (train_targets.empty()) throw DataError("train segment shorter than the input horizon");

        auto params = model_.params();
        nn::Adam opt(params);
        std::mt19937_64 shuffle_rng(cfg_.seed ^ 0x2545f4914f6cdd1dull);

        TrainHistory hist;
        double best_val = std::numeric_limits<double>::infinity();
        std::vector<nn::Mat> best_params;
        int since_best = 0;

        for (int epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
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
                    nn::Mat window = count_window(cube, t);
                    nn::Mat wwin;
                    if (use_w) wwin = weather_window(*weather, t);
                    model_.forward(window, use_w ? &wwin : nullptr);
                    batch_loss += model_.loss(cube.counts.row(t).transpose());
                    model_.backward(cube.counts.row(t).transpose(), 1.0 / double(take));
                }
                batch_loss /= double(take);
                if (!std::isfinite(batch_loss))
                    throw TrainingError("stzinb diverged (non-finite loss) at epoch " +
                                        std::to_string(epoch));
                opt.step(cfg_.learning_rate);
                epoch_loss += batch_loss;
                ++batches;
            }
            epoch_loss /= double(batches);

            double val_loss = evaluate_loss(cube, val_targets, weather);
            if (!std::isfinite(val_loss))
                throw TrainingError("stzinb diverged (non-finite validation loss) at epoch " +
                                    std::to_string(epoch));
            hist.train_loss.push_back(epoch_loss);
            hist.val_loss.push_back(val_loss);
            hist.lr.push_back(cfg_.learning_rate);

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

    DistributionFrame predict_distribution(const ObservationCube& cube, const IndexRange& range,
                                           const WeatherSeries* weather) const {
        if (!trained_) throw TrainingError("stzinb model has not been trained");
        const bool use_w = model_.uses_attention();
        if (use_w && !weather) throw ConfigError("the 3d2d1d variant needs a weather series");
        StzinbModel scratch = model_;
        auto targets = window_targets(range, cfg_.input_horizon);
        if (targets.empty()) throw DataError("segment shorter than the input horizon");

        DistributionFrame f;
        f.tract_ids = cube.tract_ids;
        const int rows = static_cast<int>(targets.size());
        for (Eigen::MatrixXd* m : {&f.n, &f.p, &f.pi, &f.mean, &f.q10, &f.q90})
            m->resize(rows, cube.N());
        for (int r = 0; r < rows; ++r) {
            int t = targets[r];
            nn::Mat window = count_window(cube, t);
            nn::Mat wwin;
            if (use_w) wwin = weather_window(*weather, t);
            ZinbField field = scratch.forward(window, use_w ? &wwin : nullptr);
            f.time_index.push_back(cube.time_index[t]);
            for (int i = 0; i < cube.N(); ++i) {
                ZinbPoint q{field.n(i), field.p(i), field.pi(i)};
                f.n(r, i) = q.n;
                f.p(r, i) = q.p;
                f.pi(r, i) = q.pi;
                f.mean(r, i) = zinb_mean(q);
                f.q10(r, i) = static_cast<double>(zinb_quantile(0.1, q));
                f.q90(r, i) = static_cast<double>(zinb_quantile(0.9, q));
            }
        }
        return f;
    }

    // Point predictions (predictive mean) in the shared dump schema.
    PredictionFrame predict_range(const ObservationCube& cube, const IndexRange& range,
                                  const WeatherSeries* weather) const {
        DistributionFrame d = predict_distribution(cube, range, weather);
        PredictionFrame f;
        f.time_index = d.time_index;
        f.tract_ids = d.tract_ids;
        f.yhat = d.mean;
        f.y.resize(d.mean.rows(), d.mean.cols());
        auto targets = window_targets(range, cfg_.input_horizon);
        for (std::size_t r = 0; r < targets.size(); ++r)
            f.y.row(static_cast<int>(r)) = cube.counts.row(targets[r]);
        return f;
    }

    json checkpoint() {
        json j;
        j["model"] = "stzinb";
        j["config"] = cfg_.to_json();
        j["uses_attention"] = model_.uses_attention();
        if (model_.uses_attention()) {
            j["weather_normalizer"] = {
                {"mean",
                 std::vector<double>(wnorm_.mean.data(), wnorm_.mean.data() + wnorm_.mean.size())},
                {"stdev", std::vector<double>(wnorm_.stdev.data(),
                                              wnorm_.stdev.data() + wnorm_.stdev.size())}};
        }
        j["params"] = params_to_json(model_.params());
        return j;
    }

    void restore(const json& j) {
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
    nn::Mat count_window(const ObservationCube& cube, int target_t) const {
        nn::Mat w(cube.N(), cfg_.input_horizon);
        for (int j = 0; j < cfg_.input_horizon; ++j)
            w.col(j) = cube.counts.row(target_t - cfg_.input_horizon + j).transpose();
        return w;
    }

    nn::Mat weather_window(const WeatherSeries& weather, int target_t) const {
        nn::Mat w(cfg_.input_horizon, weather.values.cols());
        for (int j = 0; j < cfg_.input_horizon; ++j)
            w.row(j) = weather.values.row(target_t - cfg_.input_horizon + j);
        return wnorm_.normalize(w);
    }

    double evaluate_loss(const ObservationCube& cube, const std::vector<int>& targets,
                         const WeatherSeries* weather) {
        if (targets.empty()) return std::numeric_limits<double>::quiet_NaN();
        const bool use_w = model_.uses_attention();
        double acc = 0.0;
        for (int t : targets) {
            nn::Mat window = count_window(cube, t);
            nn::Mat wwin;
            if (use_w) wwin = weather_window(*weather, t);
            model_.forward(window, use_w ? &wwin : nullptr);
            acc += model_.loss(cube.counts.row(t).transpose());
        }
        return acc / double(targets.size());
    }

    StzinbConfig cfg_;
    StzinbModel model_;
    WeatherNormalizer wnorm_;
    bool trained_ = false;
};

}  // namespace urbanfuse
