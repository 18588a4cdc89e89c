#pragma once

#include "ccsq/metrics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ccsq::seqnet {

enum class LayerKind { lstm, blstm };
enum class HeadKind { identity, tanh, softmax };
enum class Task { arousal, valence, speaker };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

struct LayerSpec {
    LayerKind kind = LayerKind::lstm;
    int size = 0;
};

struct HeadSpec {
    HeadKind kind = HeadKind::identity;
    int width = 1;
    Task task = Task::arousal;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    std::vector<HeadSpec> heads;
    int input_dim = 0;
};

std::string spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const std::string& text);

// One LSTM direction: stacked gate blocks in order input, forget, cell,
// output (rows [0,H), [H,2H), [2H,3H), [3H,4H)).
struct DirectionParams {
    Eigen::MatrixXd wx; // 4H x I
    Eigen::MatrixXd wh; // 4H x H
    Eigen::VectorXd b;  // 4H
};

struct LayerParams {
    std::vector<DirectionParams> dirs; // 1 (lstm) or 2 (blstm: forward, backward)
};

struct HeadParams {
    Eigen::MatrixXd w; // width x in
    Eigen::VectorXd b; // width
};

struct NetworkParams {
    std::vector<LayerParams> layers;
    std::vector<HeadParams> heads;
};

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed);
NetworkParams zero_params(const NetworkSpec& spec);

std::size_t param_count(const NetworkSpec& spec);
// Canonical traversal: layers in order; per layer forward then backward
// direction; per direction gates i,f,g,o with input weights row-major,
// then recurrent, then bias; then heads (weights row-major, then bias).
std::vector<double> flatten(const NetworkParams& params);
NetworkParams unflatten(const NetworkSpec& spec, const std::vector<double>& flat);

// Per-head output sequences (rows = timesteps) for one utterance.
std::vector<Eigen::MatrixXd> forward(const NetworkSpec& spec, const NetworkParams& params,
                                     const Eigen::MatrixXd& seq);

struct TrainConfig {
    double learning_rate = 0.01;
    int max_epochs = 100;
    int patience = 15;
    int batch = 8; // utterances per gradient step
    std::uint64_t seed = 0;
    double adversarial_lambda = 0.0;
    std::map<Task, double> task_weights; // default weight 1 per regression task
    double momentum = 0.9;
    double clip_norm = 5.0;
};

struct Utterance {
    std::string id;
    Eigen::MatrixXd seq; // W x input_dim
    std::map<Task, double> targets;
    int speaker_label = -1;
    int n_speakers = 0;
};

// Batch loss: sum over regression tasks of weight * (1 - CCC over all
// concatenated timesteps), minus adversarial_lambda times the mean
// per-timestep speaker cross-entropy.
double batch_loss(const NetworkSpec& spec, const NetworkParams& params,
                  const std::vector<const Utterance*>& batch, const TrainConfig& config);

NetworkParams batch_gradient(const NetworkSpec& spec, const NetworkParams& params,
                             const std::vector<const Utterance*>& batch,
                             const TrainConfig& config, double* loss_out = nullptr);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_cc = 0.0;
    double val_ccc = 0.0;
};

struct TrainResult {
    NetworkParams params; // best validation epoch
    std::vector<EpochRecord> history;
    int best_epoch = 0;
    double best_val_ccc = 0.0;
};

TrainResult train_fold(const std::vector<Utterance>& train_utts,
                       const std::vector<Utterance>& val_utts, const NetworkSpec& spec,
                       const TrainConfig& config);

// Per regression task: mean of the head's per-timestep outputs.
std::map<Task, double> predict_utterance(const NetworkSpec& spec, const NetworkParams& params,
                                         const Eigen::MatrixXd& seq);

// Mean softmax-head probabilities over timesteps; empty if no softmax head.
std::vector<double> predict_speaker_probs(const NetworkSpec& spec, const NetworkParams& params,
                                          const Eigen::MatrixXd& seq);

// Primary regression task = task of the first regression head.
Task primary_task(const NetworkSpec& spec);

// Binary model file: magic "CCSQ", version u16, u32-length-prefixed JSON
// spec, then little-endian doubles in flatten() order.
void save_params(const NetworkSpec& spec, const NetworkParams& params, const std::string& path);
std::pair<NetworkSpec, NetworkParams> load_params(const std::string& path);

void save_history(const std::vector<EpochRecord>& history, const std::string& path);

} // namespace ccsq::seqnet
