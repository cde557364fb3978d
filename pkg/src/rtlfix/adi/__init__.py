"""Agent-debugger interface: branches, toolchain proxies and tool dispatch."""
from .case import CaseConfig, CaseInvalid, Testbench, load_case
from .toolchain import (CompileReport, SimCrash, SimReport, SimTimeout, TestbenchResult, Toolchain,
                        ToolchainMissing, ToolTimeout)
from .tools import (REGISTRY, InvocationCounters, ToolResult, ToolSession, dispatch_tool, schemas)
from .workspace import (CodeBranch, IoFailure, Patch, PatchAmbiguous, PatchError, PatchNotFound,
                        ProtectedPath, Workspace, apply_patch, apply_to_directory)

__all__ = [
    "CaseConfig", "CaseInvalid", "Testbench", "load_case", "CompileReport", "SimCrash", "SimReport",
    "SimTimeout", "TestbenchResult", "Toolchain", "ToolchainMissing", "ToolTimeout", "REGISTRY",
    "InvocationCounters", "ToolResult", "ToolSession", "dispatch_tool", "schemas", "CodeBranch",
    "IoFailure", "Patch", "PatchAmbiguous", "PatchError", "PatchNotFound", "ProtectedPath", "Workspace",
    "apply_patch", "apply_to_directory",
]
