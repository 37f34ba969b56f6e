#pragma once

// Soft dice objective. For probability mask m and binary reference g:
//   phi = sum(m*g) / (sum(m*g) + a*sum(m*(1-g)) + b*sum((1-m)*g) + eps)
// pooled over every element passed in (slices of one batch are concatenated
// before the sums). The per-class loss is 1 - phi, summed over classes.

#include "scaa/tensor.hpp"

namespace scaa {

struct DiceConfig {
    double alpha = 0.5;
    double beta = 0.5;
    double eps = 1e-5;
};

template <typename T>
Tensor<T> soft_dice_phi(const Tensor<T>& m, const Tensor<T>& g, const DiceConfig& cfg = {}) {
    SCAA_CHECK(m.shape() == g.shape(), "soft_dice_phi: mask ", shape_str(m.shape()),
               " vs reference ", shape_str(g.shape()));
    Tensor<T> tp = sum_all(mul(m, g));
    Tensor<T> fp = sum_all(mul(m, rsub_scalar(g, T(1))));
    Tensor<T> fn = sum_all(mul(rsub_scalar(m, T(1)), g));
    Tensor<T> den = add_scalar(
        add(tp, add(mul_scalar(fp, (T)cfg.alpha), mul_scalar(fn, (T)cfg.beta))), (T)cfg.eps);
    return div(tp, den);
}

// Sum over classes of (1 - phi_c). Both arguments hold one flattened tensor
// per class (pooled over whatever pixels the caller gathered).
template <typename T>
Tensor<T> dice_loss(const std::vector<Tensor<T>>& masks_per_class,
                    const std::vector<Tensor<T>>& refs_per_class, const DiceConfig& cfg = {}) {
    SCAA_CHECK(!masks_per_class.empty() && masks_per_class.size() == refs_per_class.size(),
               "dice_loss: need one mask and one reference per class");
    Tensor<T> total;
    for (size_t c = 0; c < masks_per_class.size(); ++c) {
        Tensor<T> term = rsub_scalar(soft_dice_phi(masks_per_class[c], refs_per_class[c], cfg), T(1));
        total = c == 0 ? term : add(total, term);
    }
    return total;
}

}  // namespace scaa
