#pragma once

#include "direct/common.hpp"
#include "direct/corpus.hpp"
#include "direct/costmodel.hpp"
#include "direct/encoder.hpp"
#include "direct/encoding.hpp"
#include "direct/evaluation.hpp"
#include "direct/heads.hpp"
#include "direct/model.hpp"
#include "direct/mtl.hpp"
#include "direct/optimizer.hpp"
#include "direct/pipeline.hpp"
#include "direct/subtasks.hpp"
#include "direct/tokenizer.hpp"
#include "direct/trainer.hpp"
