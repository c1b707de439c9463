#pragma once

// Umbrella header.

#include <abp/bounds.hpp>
#include <abp/dataset.hpp>
#include <abp/error.hpp>
#include <abp/experiment.hpp>
#include <abp/network.hpp>
#include <abp/pruner.hpp>
#include <abp/solvers.hpp>
#include <abp/sparsity.hpp>
#include <abp/trainer.hpp>
