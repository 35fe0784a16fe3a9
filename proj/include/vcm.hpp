// Copyright 2026 The vcm-postproc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "vcm/bounded_queue.hpp"
#include "vcm/checkpoint.hpp"
#include "vcm/checksum.hpp"
#include "vcm/codec.hpp"
#include "vcm/conv.hpp"
#include "vcm/data.hpp"
#include "vcm/detector.hpp"
#include "vcm/error.hpp"
#include "vcm/image_io.hpp"
#include "vcm/metrics.hpp"
#include "vcm/net.hpp"
#include "vcm/optim.hpp"
#include "vcm/pipeline.hpp"
#include "vcm/process.hpp"
#include "vcm/report.hpp"
#include "vcm/synthetic.hpp"
#include "vcm/tensor.hpp"
#include "vcm/training.hpp"
#include "vcm/video.hpp"
