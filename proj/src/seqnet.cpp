#include "ccsq/seqnet.hpp"

#include "ccsq/csv.hpp"
#include "ccsq/errors.hpp"
#include "ccsq/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ccsq::seqnet {

namespace {

using json = nlohmann::json;

std::string kind_to_string(LayerKind k) { return k == LayerKind::lstm ? "lstm" : "blstm"; }

LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "lstm") return LayerKind::lstm;
    if (s == "blstm") return LayerKind::blstm;
    throw validation_error("unknown layer kind: " + s);
}

std::string head_kind_to_string(HeadKind k) {
    switch (k) {
        case HeadKind::identity: return "identity";
        case HeadKind::tanh: return "tanh";
        case HeadKind::softmax: return "softmax";
    }
    return "?";
}

HeadKind head_kind_from_string(const std::string& s) {
    if (s == "identity") return HeadKind::identity;
    if (s == "tanh") return HeadKind::tanh;
    if (s == "softmax") return HeadKind::softmax;
    throw validation_error("unknown head kind: " + s);
}

int layer_input_dim(const NetworkSpec& spec, std::size_t layer) {
    if (layer == 0) return spec.input_dim;
    const auto& prev = spec.layers[layer - 1];
    return prev.kind == LayerKind::blstm ? 2 * prev.size : prev.size;
}

int top_dim(const NetworkSpec& spec) { return layer_input_dim(spec, spec.layers.size()); }

void validate_spec(const NetworkSpec& spec) {
    if (spec.input_dim < 1) throw validation_error("network spec: input_dim must be positive");
    if (spec.layers.empty()) throw validation_error("network spec: at least one layer required");
    if (spec.heads.empty()) throw validation_error("network spec: at least one head required");
    for (const auto& l : spec.layers)
        if (l.size < 1) throw validation_error("network spec: layer size must be positive");
    for (const auto& h : spec.heads) {
        if (h.width < 1) throw validation_error("network spec: head width must be positive");
        if (h.kind == HeadKind::softmax && h.task != Task::speaker)
            throw validation_error("network spec: softmax head must carry the speaker task");
        if (h.kind != HeadKind::softmax && h.task == Task::speaker)
            throw validation_error("network spec: speaker task requires a softmax head");
    }
}

} // namespace

std::string to_string(Task t) {
    switch (t) {
        case Task::arousal: return "arousal";
        case Task::valence: return "valence";
        case Task::speaker: return "speaker";
    }
    return "?";
}

Task task_from_string(const std::string& s) {
    if (s == "arousal") return Task::arousal;
    if (s == "valence") return Task::valence;
    if (s == "speaker") return Task::speaker;
    throw validation_error("unknown task: " + s);
}

std::string spec_to_json(const NetworkSpec& spec) {
    json j;
    j["input_dim"] = spec.input_dim;
    j["layers"] = json::array();
    for (const auto& l : spec.layers)
        j["layers"].push_back({{"kind", kind_to_string(l.kind)}, {"size", l.size}});
    j["heads"] = json::array();
    for (const auto& h : spec.heads)
        j["heads"].push_back({{"kind", head_kind_to_string(h.kind)},
                              {"width", h.width},
                              {"task", to_string(h.task)}});
    return j.dump();
}

NetworkSpec spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw validation_error(std::string("network spec JSON: ") + e.what());
    }
    NetworkSpec spec;
    spec.input_dim = j.at("input_dim").get<int>();
    for (const auto& l : j.at("layers"))
        spec.layers.push_back({layer_kind_from_string(l.at("kind").get<std::string>()),
                               l.at("size").get<int>()});
    for (const auto& h : j.at("heads"))
        spec.heads.push_back({head_kind_from_string(h.at("kind").get<std::string>()),
                              h.at("width").get<int>(),
                              task_from_string(h.at("task").get<std::string>())});
    validate_spec(spec);
    return spec;
}

NetworkParams zero_params(const NetworkSpec& spec) {
    validate_spec(spec);
    NetworkParams p;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const int in = layer_input_dim(spec, l);
        const int h = spec.layers[l].size;
        const int ndirs = spec.layers[l].kind == LayerKind::blstm ? 2 : 1;
        LayerParams lp;
        for (int d = 0; d < ndirs; ++d) {
            DirectionParams dp;
            dp.wx = Eigen::MatrixXd::Zero(4 * h, in);
            dp.wh = Eigen::MatrixXd::Zero(4 * h, h);
            dp.b = Eigen::VectorXd::Zero(4 * h);
            lp.dirs.push_back(std::move(dp));
        }
        p.layers.push_back(std::move(lp));
    }
    const int td = top_dim(spec);
    for (const auto& hs : spec.heads) {
        HeadParams hp;
        hp.w = Eigen::MatrixXd::Zero(hs.width, td);
        hp.b = Eigen::VectorXd::Zero(hs.width);
        p.heads.push_back(std::move(hp));
    }
    return p;
}

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
    NetworkParams p = zero_params(spec);
    Rng rng(seed);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const int h = spec.layers[l].size;
        const int in = static_cast<int>(p.layers[l].dirs[0].wx.cols());
        for (auto& dp : p.layers[l].dirs) {
            // Per-gate fan: H x I input matrices, H x H recurrent.
            const double rx = std::sqrt(6.0 / (in + h));
            const double rh = std::sqrt(6.0 / (h + h));
            for (int g = 0; g < 4; ++g) {
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < in; ++c)
                        dp.wx(g * h + r, c) = rng.uniform(-rx, rx);
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < h; ++c)
                        dp.wh(g * h + r, c) = rng.uniform(-rh, rh);
            }
            dp.b.segment(h, h).setOnes(); // forget-gate bias
        }
    }
    const int td = top_dim(spec);
    for (std::size_t i = 0; i < spec.heads.size(); ++i) {
        const double r = std::sqrt(6.0 / (td + spec.heads[i].width));
        for (int row = 0; row < spec.heads[i].width; ++row)
            for (int c = 0; c < td; ++c) p.heads[i].w(row, c) = rng.uniform(-r, r);
    }
    return p;
}

std::size_t param_count(const NetworkSpec& spec) {
    return flatten(zero_params(spec)).size();
}

std::vector<double> flatten(const NetworkParams& params) {
    std::vector<double> out;
    for (const auto& layer : params.layers) {
        for (const auto& dp : layer.dirs) {
            const int h = static_cast<int>(dp.wh.cols());
            for (int g = 0; g < 4; ++g) {
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < dp.wx.cols(); ++c) out.push_back(dp.wx(g * h + r, c));
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < h; ++c) out.push_back(dp.wh(g * h + r, c));
                for (int r = 0; r < h; ++r) out.push_back(dp.b(g * h + r));
            }
        }
    }
    for (const auto& hp : params.heads) {
        for (int r = 0; r < hp.w.rows(); ++r)
            for (int c = 0; c < hp.w.cols(); ++c) out.push_back(hp.w(r, c));
        for (int r = 0; r < hp.b.size(); ++r) out.push_back(hp.b(r));
    }
    return out;
}

NetworkParams unflatten(const NetworkSpec& spec, const std::vector<double>& flat) {
    NetworkParams p = zero_params(spec);
    std::size_t pos = 0;
    auto take = [&]() {
        if (pos >= flat.size()) throw validation_error("unflatten: parameter vector too short");
        return flat[pos++];
    };
    for (auto& layer : p.layers) {
        for (auto& dp : layer.dirs) {
            const int h = static_cast<int>(dp.wh.cols());
            for (int g = 0; g < 4; ++g) {
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < dp.wx.cols(); ++c) dp.wx(g * h + r, c) = take();
                for (int r = 0; r < h; ++r)
                    for (int c = 0; c < h; ++c) dp.wh(g * h + r, c) = take();
                for (int r = 0; r < h; ++r) dp.b(g * h + r) = take();
            }
        }
    }
    for (auto& hp : p.heads) {
        for (int r = 0; r < hp.w.rows(); ++r)
            for (int c = 0; c < hp.w.cols(); ++c) hp.w(r, c) = take();
        for (int r = 0; r < hp.b.size(); ++r) hp.b(r) = take();
    }
    if (pos != flat.size())
        throw validation_error("unflatten: parameter vector too long (" +
                               std::to_string(flat.size()) + " vs " + std::to_string(pos) + ")");
    return p;
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct DirCache {
    Eigen::MatrixXd gi, gf, gg, go, c, tc, h; // T x H, indexed by real time
};

// One LSTM pass. reverse_time selects the processing order t = T-1..0.
void run_direction(const DirectionParams& p, const Eigen::MatrixXd& in, bool reverse_time,
                   DirCache& cache) {
    const auto T = in.rows();
    const int h = static_cast<int>(p.wh.cols());
    cache.gi.resize(T, h);
    cache.gf.resize(T, h);
    cache.gg.resize(T, h);
    cache.go.resize(T, h);
    cache.c.resize(T, h);
    cache.tc.resize(T, h);
    cache.h.resize(T, h);

    Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(h);
    for (Eigen::Index step = 0; step < T; ++step) {
        const Eigen::Index t = reverse_time ? T - 1 - step : step;
        const Eigen::VectorXd a = p.wx * in.row(t).transpose() + p.wh * h_prev + p.b;
        for (int j = 0; j < h; ++j) {
            const double gi = sigmoid(a(j));
            const double gf = sigmoid(a(h + j));
            const double gg = std::tanh(a(2 * h + j));
            const double go = sigmoid(a(3 * h + j));
            const double c = gf * c_prev(j) + gi * gg;
            const double tc = std::tanh(c);
            cache.gi(t, j) = gi;
            cache.gf(t, j) = gf;
            cache.gg(t, j) = gg;
            cache.go(t, j) = go;
            cache.c(t, j) = c;
            cache.tc(t, j) = tc;
            cache.h(t, j) = go * tc;
        }
        h_prev = cache.h.row(t).transpose();
        c_prev = cache.c.row(t).transpose();
    }
}

// BPTT for one direction; accumulates into grad and din.
void backprop_direction(const DirectionParams& p, const Eigen::MatrixXd& in, bool reverse_time,
                        const DirCache& cache, const Eigen::MatrixXd& dout,
                        DirectionParams& grad, Eigen::MatrixXd& din) {
    const auto T = in.rows();
    const int h = static_cast<int>(p.wh.cols());
    Eigen::VectorXd dh_rec = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd dc_rec = Eigen::VectorXd::Zero(h);
    Eigen::VectorXd da(4 * h);

    for (Eigen::Index step = T - 1; step >= 0; --step) {
        // Walk the processing order backwards.
        const Eigen::Index t = reverse_time ? T - 1 - step : step;
        const bool first_step = (step == 0);
        const Eigen::Index t_prev = reverse_time ? t + 1 : t - 1;

        for (int j = 0; j < h; ++j) {
            const double dh = dout(t, j) + dh_rec(j);
            const double tc = cache.tc(t, j);
            const double go = cache.go(t, j);
            const double dc = dc_rec(j) + dh * go * (1.0 - tc * tc);
            const double do_ = dh * tc;
            const double gi = cache.gi(t, j);
            const double gf = cache.gf(t, j);
            const double gg = cache.gg(t, j);
            const double c_prev = first_step ? 0.0 : cache.c(t_prev, j);
            const double di = dc * gg;
            const double dg = dc * gi;
            const double df = dc * c_prev;
            da(j) = di * gi * (1.0 - gi);
            da(h + j) = df * gf * (1.0 - gf);
            da(2 * h + j) = dg * (1.0 - gg * gg);
            da(3 * h + j) = do_ * go * (1.0 - go);
            dc_rec(j) = dc * gf;
        }
        grad.wx.noalias() += da * in.row(t);
        if (!first_step) grad.wh.noalias() += da * cache.h.row(t_prev);
        grad.b += da;
        din.row(t).noalias() += (p.wx.transpose() * da).transpose();
        dh_rec.noalias() = p.wh.transpose() * da;
    }
}

struct UttCache {
    std::vector<Eigen::MatrixXd> layer_inputs; // input to each layer; [0] = seq
    std::vector<std::vector<DirCache>> dirs;
    Eigen::MatrixXd top;
    std::vector<Eigen::MatrixXd> head_y; // post-activation, T x width
};

void forward_cached(const NetworkSpec& spec, const NetworkParams& params,
                    const Eigen::MatrixXd& seq, UttCache& cache) {
    if (seq.cols() != spec.input_dim)
        throw validation_error("forward: sequence width " + std::to_string(seq.cols()) +
                               " != input_dim " + std::to_string(spec.input_dim));
    if (seq.rows() < 1) throw validation_error("forward: empty sequence");

    cache.layer_inputs.clear();
    cache.dirs.assign(spec.layers.size(), {});
    cache.layer_inputs.push_back(seq);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& in = cache.layer_inputs.back();
        const bool bi = spec.layers[l].kind == LayerKind::blstm;
        const int h = spec.layers[l].size;
        cache.dirs[l].resize(bi ? 2 : 1);
        run_direction(params.layers[l].dirs[0], in, false, cache.dirs[l][0]);
        Eigen::MatrixXd out(in.rows(), bi ? 2 * h : h);
        out.leftCols(h) = cache.dirs[l][0].h;
        if (bi) {
            run_direction(params.layers[l].dirs[1], in, true, cache.dirs[l][1]);
            out.rightCols(h) = cache.dirs[l][1].h;
        }
        cache.layer_inputs.push_back(std::move(out));
    }
    cache.top = cache.layer_inputs.back();

    cache.head_y.resize(spec.heads.size());
    for (std::size_t i = 0; i < spec.heads.size(); ++i) {
        const auto& hp = params.heads[i];
        Eigen::MatrixXd z = cache.top * hp.w.transpose();
        z.rowwise() += hp.b.transpose();
        switch (spec.heads[i].kind) {
            case HeadKind::identity:
                break;
            case HeadKind::tanh:
                z = z.array().tanh();
                break;
            case HeadKind::softmax:
                for (Eigen::Index t = 0; t < z.rows(); ++t) {
                    const double m = z.row(t).maxCoeff();
                    Eigen::RowVectorXd e = (z.row(t).array() - m).exp().matrix();
                    z.row(t) = e / e.sum();
                }
                break;
        }
        cache.head_y[i] = std::move(z);
    }
}

// Backprop from per-head output gradients (w.r.t. pre-activation for
// softmax, post-activation otherwise handled by caller) into param grads.
void backward_cached(const NetworkSpec& spec, const NetworkParams& params, const UttCache& cache,
                     const std::vector<Eigen::MatrixXd>& dhead_z, NetworkParams& grad) {
    const auto T = cache.top.rows();
    Eigen::MatrixXd dtop = Eigen::MatrixXd::Zero(T, cache.top.cols());
    for (std::size_t i = 0; i < spec.heads.size(); ++i) {
        if (dhead_z[i].size() == 0) continue;
        grad.heads[i].w.noalias() += dhead_z[i].transpose() * cache.top;
        grad.heads[i].b += dhead_z[i].colwise().sum().transpose();
        dtop.noalias() += dhead_z[i] * params.heads[i].w;
    }

    Eigen::MatrixXd dout = std::move(dtop);
    for (std::size_t li = spec.layers.size(); li-- > 0;) {
        const auto& in = cache.layer_inputs[li];
        const bool bi = spec.layers[li].kind == LayerKind::blstm;
        const int h = spec.layers[li].size;
        Eigen::MatrixXd din = Eigen::MatrixXd::Zero(in.rows(), in.cols());
        backprop_direction(params.layers[li].dirs[0], in, false, cache.dirs[li][0],
                           dout.leftCols(h), grad.layers[li].dirs[0], din);
        if (bi)
            backprop_direction(params.layers[li].dirs[1], in, true, cache.dirs[li][1],
                               dout.rightCols(h), grad.layers[li].dirs[1], din);
        dout = std::move(din);
    }
}

struct TaskAssembly {
    std::vector<double> pred;
    std::vector<double> ref;
    // position of each (utterance, timestep) in pred, for gradient routing
    std::vector<std::vector<std::size_t>> index; // per utterance, per timestep
};

int find_head(const NetworkSpec& spec, Task task) {
    for (std::size_t i = 0; i < spec.heads.size(); ++i)
        if (spec.heads[i].task == task) return static_cast<int>(i);
    return -1;
}

double task_weight(const TrainConfig& config, Task t) {
    const auto it = config.task_weights.find(t);
    return it == config.task_weights.end() ? 1.0 : it->second;
}

} // namespace

std::vector<Eigen::MatrixXd> forward(const NetworkSpec& spec, const NetworkParams& params,
                                     const Eigen::MatrixXd& seq) {
    validate_spec(spec);
    UttCache cache;
    forward_cached(spec, params, seq, cache);
    return cache.head_y;
}

Task primary_task(const NetworkSpec& spec) {
    for (const auto& h : spec.heads)
        if (h.task != Task::speaker) return h.task;
    throw validation_error("network spec has no regression head");
}

namespace {

// Shared by batch_loss and batch_gradient. Caches are optional.
double batch_loss_impl(const NetworkSpec& spec, const NetworkParams& params,
                       const std::vector<const Utterance*>& batch, const TrainConfig& config,
                       std::vector<UttCache>* caches, NetworkParams* grad) {
    validate_spec(spec);
    if (batch.empty()) throw validation_error("empty batch");

    std::vector<UttCache> local;
    std::vector<UttCache>& cc = caches ? *caches : local;
    cc.resize(batch.size());
    std::size_t total_steps = 0;
    for (std::size_t u = 0; u < batch.size(); ++u) {
        forward_cached(spec, params, batch[u]->seq, cc[u]);
        total_steps += static_cast<std::size_t>(batch[u]->seq.rows());
    }

    double total = 0.0;
    std::vector<std::vector<Eigen::MatrixXd>> dhead; // per utterance, per head
    if (grad) {
        dhead.resize(batch.size());
        for (std::size_t u = 0; u < batch.size(); ++u)
            dhead[u].resize(spec.heads.size());
    }

    for (const auto& hs : spec.heads) {
        if (hs.task == Task::speaker) continue;
        const int hi = find_head(spec, hs.task);
        TaskAssembly asmb;
        asmb.index.resize(batch.size());
        for (std::size_t u = 0; u < batch.size(); ++u) {
            const auto it = batch[u]->targets.find(hs.task);
            if (it == batch[u]->targets.end())
                throw validation_error("utterance '" + batch[u]->id + "' lacks a target for " +
                                       to_string(hs.task));
            const auto& y = cc[u].head_y[static_cast<std::size_t>(hi)];
            for (Eigen::Index t = 0; t < y.rows(); ++t) {
                asmb.index[u].push_back(asmb.pred.size());
                asmb.pred.push_back(y(t, 0));
                asmb.ref.push_back(it->second);
            }
        }
        const double w = task_weight(config, hs.task);
        const auto lg = metrics::ccc_loss_grad(asmb.pred, asmb.ref);
        total += w * lg.loss;
        if (grad) {
            for (std::size_t u = 0; u < batch.size(); ++u) {
                const auto& y = cc[u].head_y[static_cast<std::size_t>(hi)];
                Eigen::MatrixXd dz(y.rows(), 1);
                for (Eigen::Index t = 0; t < y.rows(); ++t) {
                    double g = w * lg.grad[asmb.index[u][static_cast<std::size_t>(t)]];
                    if (hs.kind == HeadKind::tanh) g *= 1.0 - y(t, 0) * y(t, 0);
                    dz(t, 0) = g;
                }
                dhead[u][static_cast<std::size_t>(hi)] = std::move(dz);
            }
        }
    }

    const int spk = find_head(spec, Task::speaker);
    if (spk >= 0 && config.adversarial_lambda != 0.0) {
        double ce_sum = 0.0;
        for (std::size_t u = 0; u < batch.size(); ++u) {
            const auto& probs = cc[u].head_y[static_cast<std::size_t>(spk)];
            const int label = batch[u]->speaker_label;
            if (label < 0 || label >= probs.cols())
                throw validation_error("utterance '" + batch[u]->id +
                                       "' has no valid speaker label for adversarial training");
            for (Eigen::Index t = 0; t < probs.rows(); ++t)
                ce_sum += -std::log(std::max(probs(t, label), 1e-12));
            if (grad) {
                // d(-lambda * CE / Ntot) / dlogits = -lambda/Ntot * (p - onehot)
                Eigen::MatrixXd dz = probs;
                for (Eigen::Index t = 0; t < probs.rows(); ++t) dz(t, label) -= 1.0;
                dz *= -config.adversarial_lambda / static_cast<double>(total_steps);
                dhead[u][static_cast<std::size_t>(spk)] = std::move(dz);
            }
        }
        total -= config.adversarial_lambda * ce_sum / static_cast<double>(total_steps);
    }

    if (grad) {
        for (std::size_t u = 0; u < batch.size(); ++u)
            backward_cached(spec, params, cc[u], dhead[u], *grad);
    }
    return total;
}

} // namespace

double batch_loss(const NetworkSpec& spec, const NetworkParams& params,
                  const std::vector<const Utterance*>& batch, const TrainConfig& config) {
    return batch_loss_impl(spec, params, batch, config, nullptr, nullptr);
}

NetworkParams batch_gradient(const NetworkSpec& spec, const NetworkParams& params,
                             const std::vector<const Utterance*>& batch,
                             const TrainConfig& config, double* loss_out) {
    NetworkParams grad = zero_params(spec);
    std::vector<UttCache> caches;
    const double loss = batch_loss_impl(spec, params, batch, config, &caches, &grad);
    if (loss_out) *loss_out = loss;
    return grad;
}

std::map<Task, double> predict_utterance(const NetworkSpec& spec, const NetworkParams& params,
                                         const Eigen::MatrixXd& seq) {
    const auto outputs = forward(spec, params, seq);
    std::map<Task, double> result;
    for (std::size_t i = 0; i < spec.heads.size(); ++i) {
        if (spec.heads[i].task == Task::speaker) continue;
        result[spec.heads[i].task] = outputs[i].col(0).mean();
    }
    return result;
}

std::vector<double> predict_speaker_probs(const NetworkSpec& spec, const NetworkParams& params,
                                          const Eigen::MatrixXd& seq) {
    const int spk = find_head(spec, Task::speaker);
    if (spk < 0) return {};
    const auto outputs = forward(spec, params, seq);
    const Eigen::VectorXd mean = outputs[static_cast<std::size_t>(spk)].colwise().mean();
    return std::vector<double>(mean.data(), mean.data() + mean.size());
}

TrainResult train_fold(const std::vector<Utterance>& train_utts,
                       const std::vector<Utterance>& val_utts, const NetworkSpec& spec,
                       const TrainConfig& config) {
    validate_spec(spec);
    if (train_utts.empty() || val_utts.empty())
        throw validation_error("train_fold: train and validation sets must be non-empty");
    if (config.patience < 1) throw config_error("train_fold: patience must be >= 1");
    if (config.batch < 1) throw config_error("train_fold: batch must be >= 1");
    if (config.learning_rate <= 0.0) throw config_error("train_fold: learning_rate must be > 0");

    NetworkParams params = init_params(spec, config.seed);
    std::vector<double> velocity(flatten(params).size(), 0.0);
    Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

    const Task prim = primary_task(spec);
    auto validate = [&](const NetworkParams& p, double* cc_out) {
        std::vector<double> pred, ref;
        const int hi = find_head(spec, prim);
        for (const auto& utt : val_utts) {
            UttCache cache;
            forward_cached(spec, p, utt.seq, cache);
            const auto& y = cache.head_y[static_cast<std::size_t>(hi)];
            const double target = utt.targets.at(prim);
            for (Eigen::Index t = 0; t < y.rows(); ++t) {
                pred.push_back(y(t, 0));
                ref.push_back(target);
            }
        }
        *cc_out = metrics::pearson_cc(pred, ref);
        return metrics::ccc(pred, ref);
    };

    TrainResult result;
    result.params = params;
    double best_ccc = -2.0;
    int since_best = 0;

    std::vector<std::size_t> order(train_utts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch)) {
            std::vector<const Utterance*> batch;
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch));
            for (std::size_t i = start; i < end; ++i) batch.push_back(&train_utts[order[i]]);

            double loss = 0.0;
            const NetworkParams grad = batch_gradient(spec, params, batch, config, &loss);
            if (!std::isfinite(loss))
                throw numeric_error("training diverged at epoch " + std::to_string(epoch));
            epoch_loss += loss;
            ++n_batches;

            std::vector<double> g = flatten(grad);
            double norm2 = 0.0;
            for (double v : g) norm2 += v * v;
            const double norm = std::sqrt(norm2);
            const double scale = (config.clip_norm > 0.0 && norm > config.clip_norm)
                                     ? config.clip_norm / norm
                                     : 1.0;
            std::vector<double> flat = flatten(params);
            for (std::size_t i = 0; i < flat.size(); ++i) {
                velocity[i] = config.momentum * velocity[i] - config.learning_rate * scale * g[i];
                flat[i] += velocity[i];
            }
            params = unflatten(spec, flat);
        }

        double val_cc = 0.0;
        const double val_ccc = validate(params, &val_cc);
        result.history.push_back(
            {epoch, epoch_loss / static_cast<double>(n_batches), val_cc, val_ccc});

        if (val_ccc > best_ccc) {
            best_ccc = val_ccc;
            result.params = params;
            result.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= config.patience) {
            break;
        }
    }
    result.best_val_ccc = best_ccc;
    return result;
}

void save_params(const NetworkSpec& spec, const NetworkParams& params, const std::string& path) {
    static_assert(std::endian::native == std::endian::little,
                  "model serialization assumes a little-endian host");
    const std::string spec_json = spec_to_json(spec);
    const std::vector<double> flat = flatten(params);

    std::ostringstream out;
    out.write("CCSQ", 4);
    const std::uint16_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 2);
    const auto len = static_cast<std::uint32_t>(spec_json.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(spec_json.data(), static_cast<std::streamsize>(spec_json.size()));
    out.write(reinterpret_cast<const char*>(flat.data()),
              static_cast<std::streamsize>(flat.size() * sizeof(double)));
    csv::atomic_write_text(path, out.str());
}

std::pair<NetworkSpec, NetworkParams> load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "CCSQ")
        throw validation_error(path + ": not a CCSQ model file");
    std::uint16_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 2);
    if (version != 1)
        throw validation_error(path + ": unsupported model version " + std::to_string(version));
    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string spec_json(len, '\0');
    in.read(spec_json.data(), len);
    if (!in) throw validation_error(path + ": truncated model file");
    const NetworkSpec spec = spec_from_json(spec_json);

    std::vector<double> flat(param_count(spec));
    in.read(reinterpret_cast<char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (!in) throw validation_error(path + ": truncated parameter data");
    return {spec, unflatten(spec, flat)};
}

void save_history(const std::vector<EpochRecord>& history, const std::string& path) {
    std::ostringstream out;
    out << "epoch,train_loss,val_cc,val_ccc\n";
    for (const auto& r : history)
        out << r.epoch << ',' << csv::format_double(r.train_loss) << ','
            << csv::format_double(r.val_cc) << ',' << csv::format_double(r.val_ccc) << '\n';
    csv::atomic_write_text(path, out.str());
}

} // namespace ccsq::seqnet
