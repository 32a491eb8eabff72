#pragma once

#include "spikecnn/binary_io.hpp"
#include "spikecnn/cnn.hpp"
#include "spikecnn/complexity.hpp"
#include "spikecnn/conversion.hpp"
#include "spikecnn/edf.hpp"
#include "spikecnn/eeg.hpp"
#include "spikecnn/errors.hpp"
#include "spikecnn/evaluation.hpp"
#include "spikecnn/label.hpp"
#include "spikecnn/network_spec.hpp"
#include "spikecnn/op_counter.hpp"
#include "spikecnn/pipeline.hpp"
#include "spikecnn/random.hpp"
#include "spikecnn/snn.hpp"
#include "spikecnn/spike_encoder.hpp"
#include "spikecnn/tensor.hpp"
#include "spikecnn/text.hpp"
#include "spikecnn/weights.hpp"
