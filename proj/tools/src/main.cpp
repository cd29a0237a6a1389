#include "clborrow/app/run.hpp"

int main(int argc, char** argv) { return clborrow::app::main_entry(argc, argv); }
