#include "lqa/gradcheck.hpp"

#include <algorithm>
#include <random>

namespace lqa {

Scalar relative_error(const Vector& analytic, const Vector& numeric, Scalar floor) {
  const Scalar scale = std::max({analytic.norm(), numeric.norm(), floor});
  if (scale == 0) return 0;
  return (analytic - numeric).norm() / scale;
}

GradCheckReport finite_difference_check(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                                        const std::vector<std::string>& names, Scalar h) {
  GradientMap grads;
  {
    Tape tape;
    grads = tape.backward(loss());
  }
  GradCheckReport report;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor& leaf = leaves[li];
    Vector& data = leaf.mutable_data();
    Vector numeric(data.size());
    for (Index i = 0; i < data.size(); ++i) {
      const Scalar saved = data[i];
      data[i] = saved + h;
      const Scalar up = loss().item();
      data[i] = saved - h;
      const Scalar down = loss().item();
      data[i] = saved;
      numeric[i] = (up - down) / (2 * h);
    }
    const Vector analytic = grads.at(leaf);
    GradCheckEntry e;
    e.name = li < names.size() ? names[li] : "leaf" + std::to_string(li);
    e.size = leaf.size();
    e.rel_error = relative_error(analytic, numeric, h);
    e.analytic_norm = analytic.norm();
    e.numeric_norm = numeric.norm();
    report.worst = std::max(report.worst, e.rel_error);
    report.entries.push_back(std::move(e));
  }
  return report;
}

Tensor pooled_probe_loss(const Detector& model, const Tensor& image, std::uint64_t seed) {
  const Detector::Output out = model.forward(image);
  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> normal(0.0, 1.0);
  auto weights = [&](Index n) {
    Vector w(n);
    for (Index i = 0; i < n; ++i) w[i] = normal(rng);
    return w;
  };
  const Tensor pooled_tokens = mean_rows(out.features.tokens);
  const Tensor box_term = sum(mul(out.box, Tensor::from(out.box.shape(), weights(out.box.size()))));
  const Tensor token_term = sum(mul(pooled_tokens, Tensor::from(pooled_tokens.shape(), weights(pooled_tokens.size()))));
  return add(box_term, token_term);
}

void randomize_gates(Detector& model, std::uint64_t seed, Scalar stddev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> normal(0.0, stddev);
  for (Parameter& p : model.params().entries()) {
    const bool gate = p.name.ends_with(".gamma") || p.name.ends_with(".rho") || p.name == "adapter.lq0";
    if (!gate) continue;
    for (Index i = 0; i < p.value.size(); ++i) p.value.mutable_data()[i] = normal(rng);
  }
}

GradCheckReport gradcheck_model(Detector& model, std::uint64_t seed, Scalar h) {
  const Index size = model.config().backbone.image_size;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> unit(0.0, 1.0);
  Vector pixels(size * size);
  for (Index i = 0; i < pixels.size(); ++i) pixels[i] = unit(rng);
  const Tensor image = Tensor::from({1, size, size}, pixels);

  std::vector<Tensor> leaves;
  std::vector<std::string> names;
  for (const Parameter& p : model.params().entries()) {
    if (!p.trainable) continue;
    leaves.push_back(p.value);
    names.push_back(p.name);
  }
  const std::uint64_t probe_seed = seed + 1;
  return finite_difference_check([&] { return pooled_probe_loss(model, image, probe_seed); }, leaves, names, h);
}

}  // namespace lqa
