"""Exception types shared across the toolkit."""


class CllError(Exception):
    """Base class for all toolkit errors."""


class NotAssociativeError(CllError):
    """Multiplication table fails associativity; message names the first bad triple."""


class NoIdentityError(CllError):
    """Multiplication table has no two-sided identity."""


class NoInverseError(CllError):
    """Some element has no two-sided inverse; message names it."""


class NotHomomorphismError(CllError):
    """An element map does not respect multiplication."""


class NotNormalError(CllError):
    """Quotient requested by a non-normal subgroup."""


class InvalidActionError(CllError):
    """A claimed group action table is not an action by automorphisms."""


class OrdersNotCoprimeError(CllError):
    """An operation requires gcd(|H|, |Gamma|) = 1."""


class CapExceededError(CllError):
    """Input size exceeds the documented enumeration/storage cap."""


class NotCocycleError(CllError):
    """A 2-cochain table violates normalization or the cocycle identity."""


class SearchExhaustedError(CllError):
    """A cover search ran out of candidates; indicates a bug, existence is guaranteed."""


class NoSuchLiftError(CllError):
    """No same-order lift exists in the fiber (precondition violation or bug)."""


class NotUniqueError(CllError):
    """More than one same-order lift exists in the fiber (precondition violation or bug)."""


class NotGeneratingError(CllError):
    """A tuple that must generate the group does not."""


class QNotCoprimeError(CllError):
    """q shares a factor with the group order where coprimality is required."""


class AlphaNotCoprimeError(CllError):
    """A powering exponent is not invertible where it must act."""


class NotCentralError(CllError):
    """An element or kernel that must be central is not."""


class NotInCommutatorPartError(CllError):
    """A Lie/group element required to have trivial degree-1 part does not."""


class LayerSingularError(CllError):
    """A commutator-layer solve has no solution at the requested modulus."""


class BadPrimeForClassError(CllError):
    """Prime too small for the requested nilpotency class (needs 2 and 3 invertible)."""


class BadIndexError(CllError):
    """Generator index out of range in a word."""


class WordSyntaxError(CllError):
    """Unparsable word specification."""


class InconsistentPrescriptionError(CllError):
    """Prescribed pairing values cannot be realized by any basis completion."""


class VerificationFailedError(CllError):
    """A sampled automorphism failed its mandatory verification; never ignored."""


class RelatorNotKilledError(CllError):
    """A map that must kill the surface relator does not."""


class WitnessSearchFailedError(CllError):
    """No connecting automorphism found for a surjection pair (reported, not hidden)."""


class DeltaOrderViolation(UserWarning):
    """ord(delta value) does not divide q-1; the refined moment is provably zero."""


class UsageError(CllError):
    """Bad command-line or config input."""
