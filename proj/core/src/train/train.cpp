#include "unnas/train/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "unnas/autograd/ops.hpp"
#include "unnas/error.hpp"

namespace unnas {

namespace {

constexpr std::uint64_t kTrainStreamTag = 1, kValStreamTag = 2, kInitTag = 3;

template <typename F>
void for_each_field(TrainRecipe& r, F&& f) {
  f("width", r.width);
  f("depth", r.depth);
  f("epochs", r.epochs);
  f("warmup_epochs", r.warmup_epochs);
  f("lr", r.lr);
  f("momentum", r.momentum);
  f("weight_decay", r.weight_decay);
  f("batch_size", r.batch_size);
  f("auxiliary", r.auxiliary);
  f("aux_weight", r.aux_weight);
  f("stem_stride_layers", r.stem_stride_layers);
  f("augment", r.augment);
  f("input_crop", r.input_crop);
  f("color_bins", r.color_bins);
  f("color_pool", r.color_pool);
  f("jigsaw_grid", r.jigsaw_grid);
  f("jigsaw_K", r.jigsaw_K);
  f("max_batches_per_epoch", r.max_batches_per_epoch);
  f("seed", r.seed);
}

// Number of correct argmax predictions for (N, K) or (N, K, H, W) logits.
template <typename T>
std::int64_t count_correct(const Tensor<T>& logits, std::span<const std::int32_t> targets) {
  const auto n = logits.shape[0], k = logits.shape[1];
  std::int64_t spatial = 1;
  for (std::size_t d = 2; d < logits.shape.size(); ++d) spatial *= logits.shape[d];
  if (static_cast<std::int64_t>(targets.size()) != n * spatial) {
    throw ContractViolation("accuracy: " + std::to_string(targets.size()) + " targets for logits " +
                            shape_str(logits.shape));
  }
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t s = 0; s < spatial; ++s) {
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < k; ++c) {
        if (logits[(i * k + c) * spatial + s] > logits[(i * k + best) * spatial + s]) best = c;
      }
      correct += best == targets[static_cast<std::size_t>(i * spatial + s)];
    }
  }
  return correct;
}

}  // namespace

void TrainRecipe::validate() const {
  auto fail = [](const std::string& m) { throw ContractViolation("recipe: " + m); };
  if (width < 1 || depth < 1) fail("width and depth must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (warmup_epochs < 0 || (epochs > 0 && warmup_epochs >= epochs)) fail("warmup_epochs must lie in [0, epochs)");
  if (lr < 0 || momentum < 0 || weight_decay < 0 || aux_weight < 0) fail("lr, momentum and decays must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (max_batches_per_epoch < 0) fail("max_batches_per_epoch must be >= 0");
  if (input_crop < 0) fail("input_crop must be >= 0");
}

TaskSpec TrainRecipe::task_spec(Task task) const {
  return {task, color_bins, color_pool, jigsaw_grid, jigsaw_K, seed};
}

nn::NetworkConfig TrainRecipe::network_config(Task task, int dataset_classes) const {
  nn::NetworkConfig cfg;
  cfg.width = width;
  cfg.depth = depth;
  cfg.stem_stride_layers = stem_stride_layers;
  cfg.auxiliary = auxiliary && depth >= 8;
  cfg.aux_weight = aux_weight;
  return task_network_config(cfg, task_spec(task), dataset_classes);
}

nlohmann::json recipe_to_json(const TrainRecipe& r) {
  nlohmann::json j = nlohmann::json::object();
  TrainRecipe copy = r;
  for_each_field(copy, [&](const char* key, auto& v) { j[key] = v; });
  return j;
}

TrainRecipe recipe_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("recipe: expected an object");
  TrainRecipe r;
  std::set<std::string> known;
  for_each_field(r, [&](const char* key, auto& v) {
    known.insert(key);
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(v);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("recipe.") + key + ": " + e.what());
    }
  });
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw FormatError("recipe." + key + ": unknown field");
  }
  return r;
}

nlohmann::json report_to_json(const TrainReport& r) {
  return {{"task", r.task},
          {"epochs", r.epochs},
          {"final_train_loss", std::isfinite(r.final_train_loss) ? nlohmann::json(r.final_train_loss) : nullptr},
          {"val_accuracy", r.val_accuracy},
          {"seed", r.seed},
          {"wall_time", r.wall_time}};
}

template <typename T>
double train_step(nn::Model<T>& model, const Batch& batch, const SgdOptions& opt, double aux_weight) {
  auto params = model.parameters();
  zero_grad(std::span<Parameter<T>* const>(params));
  Tape<T> tape;
  auto out = model.forward(tape.input(tensor_cast<T>(batch.inputs), false), true);
  Var<T> loss = task_loss(out, batch, aux_weight);
  const double value = static_cast<double>(loss.value()[0]);
  if (!std::isfinite(value)) throw DivergenceError("non-finite training loss");
  tape.backward(loss);
  sgd_step(std::span<Parameter<T>* const>(params), opt);
  return value;
}

template <typename T>
double evaluate_accuracy(nn::Model<T>& model, const BatchSource& source) {
  std::int64_t correct = 0, total = 0;
  for (std::int64_t b = 0; b < source.batches_per_epoch(); ++b) {
    const Batch batch = source.batch(0, b);
    Tape<T> tape(false);
    auto out = model.forward(tape.input(tensor_cast<T>(batch.inputs), false), false);
    correct += count_correct(out.logits.value(), batch.targets);
    total += static_cast<std::int64_t>(batch.targets.size());
  }
  if (total == 0) throw ContractViolation("accuracy: empty evaluation set");
  return static_cast<double>(correct) / static_cast<double>(total);
}

TrainReport train_and_score(const Architecture& arch, const Dataset& train, const Dataset& val, Task task,
                            const TrainRecipe& recipe) {
  recipe.validate();
  if (train.size() == 0 || val.size() == 0) throw ContractViolation("train_and_score: empty split");
  const auto start = std::chrono::steady_clock::now();
  const TaskSpec spec = recipe.task_spec(task);
  const Dataset train_mount = is_pretext(task) ? train.images_only() : train;
  const Dataset val_mount = is_pretext(task) ? val.images_only() : val;

  StreamConfig sc;
  sc.batch_size = recipe.batch_size;
  sc.augment = recipe.augment;
  sc.crop = recipe.input_crop;
  StreamConfig ec = sc;
  ec.shuffle = false;
  ec.drop_last = false;
  ec.augment = false;
  const auto train_src = make_source(train_mount, spec, derive_seed(recipe.seed, kTrainStreamTag), sc);
  const auto val_src = make_source(val_mount, spec, derive_seed(recipe.seed, kValStreamTag), ec);

  const auto cfg = recipe.network_config(task, train.num_classes());
  const auto in_channels = task_input_channels(spec, train.images().image_shape()[0]);
  Rng rng(derive_seed(recipe.seed, kInitTag));
  auto model = nn::make_model<float>(arch, cfg, rng, in_channels);

  std::int64_t nb = train_src->batches_per_epoch();
  if (recipe.max_batches_per_epoch > 0) nb = std::min(nb, recipe.max_batches_per_epoch);
  TrainReport report;
  report.task = std::string(task_name(task));
  report.epochs = recipe.epochs;
  report.seed = recipe.seed;
  report.final_train_loss = std::numeric_limits<double>::quiet_NaN();
  const Schedule sched = recipe.schedule();
  for (int e = 0; e < recipe.epochs; ++e) {
    const SgdOptions opt{cosine_lr(sched, e), recipe.momentum, recipe.weight_decay};
    double total = 0;
    for (std::int64_t b = 0; b < nb; ++b) {
      try {
        total += train_step(*model, train_src->batch(e, b), opt, cfg.aux_weight);
      } catch (const DivergenceError& err) {
        std::ostringstream os;
        os << report.task << " training diverged at epoch " << e << " batch " << b << " (lr " << opt.lr
           << ", seed " << recipe.seed << "): " << err.what();
        throw DivergenceError(os.str());
      }
    }
    report.final_train_loss = total / static_cast<double>(nb);
  }
  report.val_accuracy = evaluate_accuracy(*model, *val_src);
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

RepeatStats repeat_and_average(const std::function<double(std::uint64_t)>& job, int repeats, std::uint64_t base_seed) {
  if (repeats < 1) throw ContractViolation("repeat_and_average: repeats must be >= 1");
  RepeatStats s;
  for (int r = 0; r < repeats; ++r) {
    s.seeds.push_back(derive_seed(base_seed, static_cast<std::uint64_t>(r)));
    s.values.push_back(job(s.seeds.back()));
  }
  for (double v : s.values) s.mean += v;
  s.mean /= repeats;
  for (double v : s.values) s.std += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(s.std / repeats);
  return s;
}

template double train_step<float>(nn::Model<float>&, const Batch&, const SgdOptions&, double);
template double train_step<double>(nn::Model<double>&, const Batch&, const SgdOptions&, double);
template double evaluate_accuracy<float>(nn::Model<float>&, const BatchSource&);
template double evaluate_accuracy<double>(nn::Model<double>&, const BatchSource&);

}  // namespace unnas
