#pragma once

#include "routoo/decimal.hpp"
#include "routoo/core.hpp"
#include "routoo/universe.hpp"
#include "routoo/predictor.hpp"
#include "routoo/selector.hpp"
#include "routoo/sweep.hpp"
#include "routoo/evalreport.hpp"
#include "routoo/dataset_io.hpp"
#include "routoo/json_io.hpp"
#include "routoo/prep.hpp"
#include "routoo/service.hpp"
#include "routoo/http_service.hpp"
#include "routoo/cli.hpp"
