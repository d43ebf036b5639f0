#include <algorithm>
#include <cmath>
#include <numeric>

#include "ldyn/compress.hpp"

namespace ldyn {

std::size_t pruned_count(std::size_t width, double ratio) {
  if (!(ratio >= 0.0) || ratio >= 1.0) {
    throw ContractError("pruning ratio must be in [0, 1), got " + std::to_string(ratio));
  }
  // The small offset keeps products such as 0.15 * 20 from flooring to 2.
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(width) + 1e-9));
}

Mlp<float> prune_mlp(const Mlp<float>& mlp, double ratio, const std::string& component, PruneReport& report) {
  const auto& layers = mlp.layers();
  const std::size_t hidden = mlp.spec().hidden_dims.size();

  // keep[l] lists the surviving neurons of hidden layer l, in original order.
  std::vector<std::vector<std::size_t>> keep(hidden);
  for (std::size_t l = 0; l < hidden; ++l) {
    const std::size_t width = mlp.spec().hidden_dims[l];
    const std::size_t remove = pruned_count(width, ratio);
    if (remove >= width) {
      throw ContractError("pruning ratio " + std::to_string(ratio) + " would empty hidden layer " + std::to_string(l) +
                          " of " + component);
    }
    const auto& in = layers[l].weight.value();       // [width × fan_in]
    const auto& out = layers[l + 1].weight.value();  // [next × width]
    PrunedLayer entry{component, l, width, width - remove, {}, std::vector<double>(width, 0.0)};
    for (std::size_t j = 0; j < width; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in.dim(1); ++i) acc += static_cast<double>(in.at(j, i)) * in.at(j, i);
      for (std::size_t k = 0; k < out.dim(0); ++k) acc += static_cast<double>(out.at(k, j)) * out.at(k, j);
      entry.scores[j] = std::sqrt(acc);
    }
    std::vector<std::size_t> order(width);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return entry.scores[a] < entry.scores[b]; });
    entry.removed.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(remove));
    std::sort(entry.removed.begin(), entry.removed.end());
    std::vector<bool> gone(width, false);
    for (auto j : entry.removed) gone[j] = true;
    for (std::size_t j = 0; j < width; ++j)
      if (!gone[j]) keep[l].push_back(j);
    report.layers.push_back(std::move(entry));
  }

  MlpSpec spec = mlp.spec();
  for (std::size_t l = 0; l < hidden; ++l) spec.hidden_dims[l] = keep[l].size();
  const auto widths = mlp.spec().widths();

  std::vector<DenseLayer<float>> pruned;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<std::size_t> rows(widths[l + 1]);
    std::vector<std::size_t> cols(widths[l]);
    std::iota(rows.begin(), rows.end(), 0);
    std::iota(cols.begin(), cols.end(), 0);
    if (l < hidden) rows = keep[l];
    if (l > 0) cols = keep[l - 1];
    const auto& w = layers[l].weight.value();
    const auto& b = layers[l].bias.value();
    Tensor<float> nw(Shape{rows.size(), cols.size()});
    Tensor<float> nb(Shape{rows.size()});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (std::size_t c = 0; c < cols.size(); ++c) nw.at(r, c) = w.at(rows[r], cols[c]);
      nb[r] = b[rows[r]];
    }
    pruned.push_back({Var<float>(std::move(nw), true), Var<float>(std::move(nb), true)});
  }
  return Mlp<float>(spec, std::move(pruned));
}

PrunedJepa prune_structured(const JepaModel& model, double ratio) {
  PruneReport report;
  report.ratio = ratio;
  report.parameters_before = model.parameter_count();
  auto input_encoder = prune_mlp(model.input_encoder(), ratio, "input_encoder", report);
  auto observation_encoder = prune_mlp(model.observation_encoder(), ratio, "observation_encoder", report);
  auto predictor = prune_mlp(model.predictor(), ratio, "predictor", report);
  auto emission_decoder = prune_mlp(model.emission_decoder(), ratio, "emission_decoder", report);
  auto input_decoder = prune_mlp(model.input_decoder(), ratio, "input_decoder", report);
  JepaModel pruned(model.config(), std::move(input_encoder), std::move(observation_encoder), std::move(predictor),
                   std::move(emission_decoder), std::move(input_decoder));
  report.parameters_after = pruned.parameter_count();
  return {std::move(pruned), std::move(report)};
}

}  // namespace ldyn
