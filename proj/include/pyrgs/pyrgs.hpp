#pragma once

#include "pyrgs/cameras.hpp"
#include "pyrgs/cloud.hpp"
#include "pyrgs/codec.hpp"
#include "pyrgs/container.hpp"
#include "pyrgs/core.hpp"
#include "pyrgs/ggd.hpp"
#include "pyrgs/io_util.hpp"
#include "pyrgs/perception.hpp"
#include "pyrgs/ply_io.hpp"
#include "pyrgs/pyramid.hpp"
