#include "scaa/trainer.hpp"

namespace scaa {

GradCheckReport grad_check_micro(Variant variant, const GradCheckOptions& opt) {
    ScaaConfig cfg = ScaaConfig::micro(2);
    cfg.variant = variant;
    ScaaModel<double> model(cfg, mix_seed(opt.seed, 0x30de));

    PhantomSpec spec = PhantomSpec::default3();
    spec.organs.resize(2);
    VolumeSample vol = generate_phantom(spec, mix_seed(opt.seed, 0xfade), "gradcheck");

    const std::vector<int64_t> zs{5, 40};
    const DiceConfig dice;
    auto loss_fn = [&]() { return step_loss(model, vol, zs, dice).total; };
    return grad_check(model.params(), loss_fn, opt);
}

}  // namespace scaa
