#pragma once

#include "enggnn/common.hpp"
#include "enggnn/experiment.hpp"
#include "enggnn/graph.hpp"
#include "enggnn/io.hpp"
#include "enggnn/metrics.hpp"
#include "enggnn/model.hpp"
#include "enggnn/nn.hpp"
#include "enggnn/simgen.hpp"
#include "enggnn/trees.hpp"
