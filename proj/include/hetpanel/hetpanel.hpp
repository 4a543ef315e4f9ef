#pragma once

#include "hetpanel/error.hpp"
#include "hetpanel/rng.hpp"
#include "hetpanel/panel.hpp"
#include "hetpanel/panel_io.hpp"
#include "hetpanel/stage1.hpp"
#include "hetpanel/engines.hpp"
#include "hetpanel/mixture.hpp"
#include "hetpanel/evaluation.hpp"
#include "hetpanel/inference.hpp"
#include "hetpanel/validation.hpp"
#include "hetpanel/geometry.hpp"
#include "hetpanel/synth.hpp"
#include "hetpanel/config.hpp"
#include "hetpanel/report.hpp"
