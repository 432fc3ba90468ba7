#pragma once

// fewgan: few-shot learning with bagging-ensembled GAN augmentation,
// latent-space Metropolis-adjusted Langevin correction of the generator, and
// multi-head fine-tuning.

#include "fewgan/ablation.hpp"
#include "fewgan/baselines.hpp"
#include "fewgan/checkpoint.hpp"
#include "fewgan/config.hpp"
#include "fewgan/dataset.hpp"
#include "fewgan/ensemble.hpp"
#include "fewgan/episode.hpp"
#include "fewgan/errors.hpp"
#include "fewgan/finetune.hpp"
#include "fewgan/gan.hpp"
#include "fewgan/grad_check.hpp"
#include "fewgan/matrix.hpp"
#include "fewgan/metrics.hpp"
#include "fewgan/mlp.hpp"
#include "fewgan/optim.hpp"
#include "fewgan/pipeline.hpp"
#include "fewgan/rng.hpp"
#include "fewgan/sampler.hpp"
#include "fewgan/tape.hpp"
