#pragma once

#include "augment.hpp"
#include "classify.hpp"
#include "clbp.hpp"
#include "color_descriptors.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "dataset.hpp"
#include "enhance.hpp"
#include "error.hpp"
#include "evalharness.hpp"
#include "features.hpp"
#include "gabor.hpp"
#include "glcm.hpp"
#include "grid.hpp"
#include "image_io.hpp"
#include "kernelgeom.hpp"
#include "knn.hpp"
#include "mlp.hpp"
#include "parallel.hpp"
#include "pdwmd.hpp"
#include "raster.hpp"
#include "reduce.hpp"
#include "rng.hpp"
#include "svm.hpp"
#include "synth.hpp"
#include "version.hpp"
