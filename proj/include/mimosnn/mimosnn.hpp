#pragma once

#include "core.hpp"
#include "forward.hpp"
#include "gradient.hpp"
#include "objective.hpp"
#include "datapipe.hpp"
#include "oracle.hpp"
#include "train.hpp"
#include "io.hpp"
#include "synthetic.hpp"
