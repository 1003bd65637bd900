#pragma once

// Hierarchical Q-learning: the manager scores top-K candidate objects, the
// worker scores (orientation, position) grids. Both are trained from replayed
// transitions with TD targets from a periodically refreshed target network.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "packbench/episode.hpp"
#include "packbench/nn.hpp"
#include "packbench/planners.hpp"
#include "packbench/rewards.hpp"
#include "packbench/rng.hpp"

namespace packbench {

inline constexpr int kWorkerChannels = 6;
inline constexpr int kManagerChannels = 7;

struct HrlConfig {
    int top_k = 20;
    int worker_resolution = 50;   // must divide the box rows and cols (capped at them)
    int manager_resolution = 16;  // pooled size of the manager's input planes
    int worker_width = 16;
    int manager_width = 16;
    int manager_hidden = 64;
};

/// Worker input for one object: one 6-channel stack per orientation, on a
/// lattice of representative positions. Channels: box height, drop height z,
/// z + object peak, mean gap under the object, fraction of the footprint's
/// edge-adjacent ring that is wall or matter above z, legal flag. Heights are
/// divided by the height cap.
struct WorkerView {
    std::vector<const OrientedShape*> shapes;  // ascending (i, j)
    std::vector<nn::Tensor> inputs;
    std::vector<Mask> legal;
    std::vector<int> xs;  // lattice row u -> box row
    std::vector<int> ys;  // lattice col v -> box col

    bool any_legal() const;
};

WorkerView worker_view(const PackingState& state, std::span<const OrientedShape> shapes, int resolution);

struct WorkerAction {
    int shape = 0;  // index into WorkerView::shapes
    int u = 0;
    int v = 0;
    double score = 0.0;
    int resolution = 0;  // lattice the action indexes
};

Placement worker_placement(const WorkerView& view, const PackingState& state, std::size_t object,
                           const WorkerAction& a);

/// Per-orientation score grids, zeroed on illegal cells.
ScoreMatrix worker_scores(const WorkerView& view, const nn::WorkerNet& net);

/// Greedy: the highest score among legal cells, ties to the smallest
/// (i, j, u, v). With probability epsilon: a uniform legal cell. nullopt when
/// nothing is legal.
std::optional<WorkerAction> worker_select(const WorkerView& view, const nn::WorkerNet& net, double epsilon, Rng& rng);

/// Manager input: the top-K candidates by bounding-box volume, one 7-channel
/// stack each (six principal views and the box, max-pooled to the manager
/// resolution); remaining slots absent. `slots` is the scorer's slot count
/// (at least K); 0 means K.
struct ManagerView {
    std::vector<std::optional<std::size_t>> slot_objects;
    std::vector<std::optional<nn::Tensor>> inputs;

    std::size_t live() const;
};

ManagerView manager_view(const PackingState& state, std::span<const std::size_t> candidates,
                         const EpisodeContext& ctx, const HrlConfig& cfg, int slots = 0);

/// Greedy over live slots (ties to the lowest slot), or with probability
/// epsilon a uniform live slot. Returns the slot index; throws on no live slot.
int manager_select(const ManagerView& view, const nn::ManagerNet& net, double epsilon, Rng& rng);

/// Same rule on precomputed scores.
int select_slot(std::span<const double> scores, std::span<const std::uint8_t> live, double epsilon, Rng& rng);

struct WorkerSample {
    nn::Tensor input;
    int u = 0;
    int v = 0;
    double target = 0.0;
};

struct ManagerSample {
    std::vector<std::optional<nn::Tensor>> inputs;
    int slot = 0;
    double target = 0.0;
};

/// Mean squared error of the taken action's score against its target;
/// accumulates the gradient when `grad` is given (sized to the parameters).
double worker_loss(const nn::WorkerNet& net, std::span<const WorkerSample> batch, std::span<double> grad = {});
double manager_loss(const nn::ManagerNet& net, std::span<const ManagerSample> batch, std::span<double> grad = {});

struct WorkerTransition {
    std::shared_ptr<const EpisodeContext> ctx;
    PackingState state;
    std::size_t object = 0;
    WorkerAction action;
    double j_curr = 0.0;
    double j_next = 0.0;
    double reward = 0.0;
    bool terminal = false;
    PackingState next_state;
    std::optional<std::size_t> next_object;
};

struct ManagerTransition {
    std::shared_ptr<const EpisodeContext> ctx;
    PackingState state;
    std::vector<std::size_t> candidates;
    int slot = 0;
    double j_curr = 0.0;
    double j_next = 0.0;
    double reward = 0.0;
    bool terminal = false;
    PackingState next_state;
    std::vector<std::size_t> next_candidates;
};

/// Fixed-capacity ring buffer with uniform sampling.
template <typename T>
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw InvalidInput("ReplayBuffer: capacity must be positive");
    }

    void push(T t) {
        if (items_.size() < capacity_) {
            items_.push_back(std::move(t));
        } else {
            items_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    std::vector<const T*> sample(std::size_t n, Rng& rng) const {
        std::vector<const T*> out;
        if (items_.empty()) return out;
        for (std::size_t k = 0; k < n; ++k) out.push_back(&items_[rng.below(items_.size())]);
        return out;
    }

    std::size_t size() const { return items_.size(); }
    const std::vector<T>& items() const { return items_; }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<T> items_;
};

/// One gradient step on the batch; targets r (terminal) or
/// r + discount * max over legal next actions of `target`. Returns the loss.
double worker_td_update(nn::WorkerNet& net, const nn::WorkerNet& target, nn::Adam& opt,
                        std::span<const WorkerTransition* const> batch, double discount, double lr,
                        const HrlConfig& cfg);
double manager_td_update(nn::ManagerNet& net, const nn::ManagerNet& target, nn::Adam& opt,
                         std::span<const ManagerTransition* const> batch, double discount, double lr,
                         const HrlConfig& cfg);

enum class TrainStage { worker_pretrain, joint };

struct TrainSchedule {
    int stage1_epochs = 200;  // one episode per epoch
    int stage2_epochs = 0;
    int worker_update_period = 1;
    int manager_update_period = 4;
    int updates_per_epoch = 4;
    double epsilon_start = 0.5;
    double epsilon_end = 0.05;
    double discount = 0.9;
    std::size_t replay_capacity = 5000;
    int batch_size = 128;
    double lr_stage1 = 1e-3;
    double lr_stage2 = 1e-4;
    double lr_end_fraction = 1.0;  // step size at the end of each stage, relative to its start
    int target_refresh = 100;  // updates between target-network copies

    /// Linear from start to end over the first half of `total` epochs.
    double epsilon(int epoch, int total) const;
    /// Linear from `base` to `base * lr_end_fraction` over `epochs`.
    double lr(double base, int epoch, int epochs) const;
};

struct TrainLogRow {
    int epoch = 0;
    TrainStage stage = TrainStage::worker_pretrain;
    double mean_j = 0.0;
    double mean_reward = 0.0;
    double loss_worker = 0.0;
    double loss_manager = 0.0;
    double epsilon = 0.0;
};

std::string train_log_csv(std::span<const TrainLogRow> rows);

struct Policies {
    nn::WorkerNet worker;
    nn::ManagerNet manager;
};

Policies make_policies(const HrlConfig& cfg, std::uint64_t seed);

/// Builds the episode context for training epoch `k`.
using EpisodeSource = std::function<std::shared_ptr<const EpisodeContext>(std::uint64_t k)>;

struct TrainOptions {
    ObjectiveWeights weights;
    StabilityTerm term = StabilityTerm::latest;
    bool run_stage1 = true;
    bool run_stage2 = false;
    /// Called after each epoch's updates with the epoch index and current policies.
    std::function<void(int, const Policies&)> on_epoch;
};

/// Stage 1 trains the worker under the bounding-box sequence with the manager
/// frozen; stage 2 trains both, the worker every worker_update_period epochs
/// and the manager every manager_update_period epochs.
std::vector<TrainLogRow> train(Policies& policies, const EpisodeSource& source, const TrainSchedule& schedule,
                               const HrlConfig& cfg, const TrainOptions& options, std::uint64_t seed);

/// Greedy learned policies for the episode runner.
class LearnedSequence final : public SequencePolicy {
public:
    LearnedSequence(const nn::ManagerNet& net, HrlConfig cfg, double epsilon = 0.0, std::uint64_t seed = 0)
        : net_(net), cfg_(cfg), epsilon_(epsilon), rng_(seed) {}
    std::size_t select(const PackingState& state, std::span<const std::size_t> candidates,
                       const EpisodeContext& ctx) override;

private:
    const nn::ManagerNet& net_;
    HrlConfig cfg_;
    double epsilon_;
    Rng rng_;
};

class LearnedPlacement final : public PlacementPolicy {
public:
    LearnedPlacement(const nn::WorkerNet& net, HrlConfig cfg, double epsilon = 0.0, std::uint64_t seed = 0)
        : net_(net), cfg_(cfg), epsilon_(epsilon), rng_(seed) {}
    std::optional<Placement> place(const PackingState& state, std::size_t object, const EpisodeContext& ctx) override;

    /// Action behind the most recent successful place() call.
    const std::optional<WorkerAction>& last_action() const { return last_; }

private:
    const nn::WorkerNet& net_;
    HrlConfig cfg_;
    double epsilon_;
    Rng rng_;
    std::optional<WorkerAction> last_;
};

}  // namespace packbench
