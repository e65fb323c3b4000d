#pragma once

#include <heart/anchors.hpp>
#include <heart/artifacts.hpp>
#include <heart/bessel.hpp>
#include <heart/edit.hpp>
#include <heart/error.hpp>
#include <heart/file_io.hpp>
#include <heart/hemb.hpp>
#include <heart/kent.hpp>
#include <heart/model_selection.hpp>
#include <heart/movmf.hpp>
#include <heart/probes.hpp>
#include <heart/sequence.hpp>
#include <heart/sphere.hpp>
#include <heart/vmf.hpp>
